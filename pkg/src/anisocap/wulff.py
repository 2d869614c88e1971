"""Wulff-ball geometry and the fundamental decay profile of the
anisotropic p-Laplacian.

The unit Wulff ball of a norm F is W = {F*(x) < 1} where F* is the dual
gauge.  Its volume is computed by sphere quadrature of F*(theta)^(-n)/n,
and the anisotropic boundary measure of the unit Wulff shape equals
n * |W|; that constant is written ``kappa`` throughout the package.

The fundamental profile

    Gamma(x) = (p-1)/(n-p) * kappa^(-1/(p-1)) * F*(x)^((p-n)/(p-1))

is anisotropic p-harmonic away from the origin and governs the far field
of every capacitary potential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .norms import NormError, NormEvaluator
from .quadrature import AngularGrid, build_angular_grid


def _angular(norm: NormEvaluator, resolution) -> AngularGrid:
    if isinstance(resolution, AngularGrid):
        return resolution
    if norm.dim == 2:
        return build_angular_grid(2, n_azimuth=int(resolution))
    n_polar, n_azimuth = resolution
    return build_angular_grid(3, n_polar=int(n_polar), n_azimuth=int(n_azimuth))


def wulff_volume(norm: NormEvaluator, resolution=(48, 96)) -> float:
    """Volume of the unit Wulff ball, (1/n) * int_S F*(theta)^(-n) dtheta."""
    grid = _angular(norm, resolution)
    fo = norm.dual_value(grid.nodes)
    return float(np.sum(grid.weights * fo ** (-norm.dim)) / norm.dim)


def kappa(norm: NormEvaluator, resolution=(48, 96)) -> float:
    """Anisotropic area of the unit Wulff shape: n * |W|."""
    return norm.dim * wulff_volume(norm, resolution)


@dataclass(frozen=True)
class WulffData:
    """Unit Wulff ball volume and boundary measure at a fixed resolution."""

    norm: NormEvaluator
    volume: float
    kappa: float
    resolution: tuple

    @staticmethod
    def compute(norm: NormEvaluator, resolution=(48, 96)) -> "WulffData":
        vol = wulff_volume(norm, resolution)
        res = (resolution,) if np.isscalar(resolution) else tuple(resolution)
        return WulffData(norm=norm, volume=vol, kappa=norm.dim * vol,
                         resolution=res)


def wulff_boundary_point(norm: NormEvaluator, theta) -> np.ndarray:
    """Point of the unit Wulff shape whose outward normal is theta.

    The gradient map xi -> F_xi(xi) sends any direction to the boundary
    point F*(.) = 1 supporting it.
    """
    return norm.gradient(theta)


class FundamentalSolution:
    """Radial-in-F* profile generating the far-field asymptotics, 1 < p < n."""

    def __init__(self, norm: NormEvaluator, p: float, kappa_value: float | None = None,
                 resolution=(48, 96)):
        if not (1.0 < p < norm.dim):
            raise NormError(f"fundamental solution requires 1 < p < n, got p={p}")
        self.norm = norm
        self.p = float(p)
        self.kappa = kappa(norm, resolution) if kappa_value is None else float(kappa_value)
        self.exponent = (p - norm.dim) / (p - 1.0)
        self.prefactor = ((p - 1.0) / (norm.dim - p)) * self.kappa ** (-1.0 / (p - 1.0))

    def value(self, x) -> np.ndarray:
        return self.prefactor * self.norm.dual_value(x) ** self.exponent

    def gradient(self, x) -> np.ndarray:
        fo, go = self.norm.dual_value_and_gradient(x)
        coef = self.prefactor * self.exponent * fo ** (self.exponent - 1.0)
        return coef[..., None] * go


def gamma_fundamental(norm: NormEvaluator, p: float, x,
                      kappa_value: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Value and gradient of the fundamental profile at x."""
    sol = FundamentalSolution(norm, p, kappa_value=kappa_value)
    return sol.value(x), sol.gradient(x)
