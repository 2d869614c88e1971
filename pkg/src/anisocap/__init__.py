"""Anisotropic p-capacity toolkit: Wulff geometry, capacitary potentials,
and numerical verification of sharp anisotropic Minkowski-type inequalities."""

__version__ = "0.1.0"

from .norms import NormSpec, NormEvaluator, NormError, make_norm, validate_norm

__all__ = [
    "NormSpec",
    "NormEvaluator",
    "NormError",
    "make_norm",
    "validate_norm",
    "__version__",
]
