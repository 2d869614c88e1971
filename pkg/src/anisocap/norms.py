"""Smooth Minkowski norms, their duals, and the derived second-order tensors.

A Minkowski norm F is an even, 1-homogeneous convex function, positive and
smooth away from the origin, whose squared-norm Hessian grad^2(F^2/2) is
positive definite off the origin.  Four families are built in:

* ``euclidean``          F(xi) = |xi|
* ``ellipsoid``          F(xi) = sqrt(xi^T A xi),  A symmetric positive definite
* ``power``              F(xi) = (sum |xi_i|^q)^(1/q),  1 < q < inf
* ``smoothed_polytope``  F(xi) = (sum <w_k, xi>^s + (eps |xi|)^s)^(1/s)

with s an even integer >= 4.  The polytope family blends an isotropic term
into an s-power mean so that a positive blend eps makes the norm uniformly
elliptic even when the direction set alone is degenerate.

All derivatives are closed form; finite differences appear only in tests.
Dual gauges F*(x) = sup_xi <xi, x>/F(xi) use closed forms where available
and a multi-start projected ascent over the unit F-sphere otherwise.  The
dual Hessian in the numerical case comes from the Legendre relation: the
Hessians of F^2/2 and (F*)^2/2 are matrix inverses at dual points.

Evaluators accept batched input of shape (..., n) and are immutable, hence
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class NormError(ValueError):
    """Invalid norm specification or evaluation request."""


# ---------------------------------------------------------------------------
# specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """Parameters selecting one member of the built-in norm families."""

    family: str
    dim: int
    matrix: Optional[np.ndarray] = None       # ellipsoid
    exponent: Optional[float] = None          # power norm q
    directions: Optional[np.ndarray] = None   # smoothed polytope (K, n)
    power: int = 4                            # smoothed polytope exponent s
    blend: float = 0.05                       # smoothed polytope eps

    @staticmethod
    def euclidean(dim: int) -> "NormSpec":
        return NormSpec(family="euclidean", dim=dim)

    @staticmethod
    def ellipsoid(matrix: np.ndarray) -> "NormSpec":
        matrix = np.asarray(matrix, dtype=float)
        return NormSpec(family="ellipsoid", dim=matrix.shape[0], matrix=matrix)

    @staticmethod
    def power(exponent: float, dim: int) -> "NormSpec":
        return NormSpec(family="power", dim=dim, exponent=float(exponent))

    @staticmethod
    def smoothed_polytope(directions: np.ndarray, power: int = 4,
                          blend: float = 0.05) -> "NormSpec":
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        return NormSpec(family="smoothed_polytope", dim=directions.shape[1],
                        directions=directions, power=int(power), blend=float(blend))

    def label(self) -> str:
        if self.family == "euclidean":
            return f"euclidean(n={self.dim})"
        if self.family == "ellipsoid":
            return f"ellipsoid(n={self.dim})"
        if self.family == "power":
            return f"power(q={self.exponent:g}, n={self.dim})"
        return (f"smoothed_polytope(K={self.directions.shape[0]}, "
                f"s={self.power}, eps={self.blend:g}, n={self.dim})")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _check_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise NormError(f"expected vectors of dimension {dim}, got shape {x.shape}")
    if np.any(np.all(x == 0.0, axis=-1)):
        raise NormError("norm derivatives are undefined at the origin")
    return x


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


class NormEvaluator:
    """Closed-form value/gradient/Hessian of a Minkowski norm and its dual.

    Subclasses implement ``value``, ``gradient``, ``hessian`` on batched
    arrays (..., n).  Dual operations fall back to a numerical sup over the
    unit F-sphere unless a subclass wires up a closed-form dual evaluator.
    """

    def __init__(self, spec: NormSpec):
        self.spec = spec
        self.dim = spec.dim
        self._dual: Optional[NormEvaluator] = None

    # -- primal ------------------------------------------------------------

    def value(self, xi) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, xi) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, xi) -> np.ndarray:
        raise NotImplementedError

    def a_matrix(self, xi) -> np.ndarray:
        """Hessian of F^2/2:  a = F_xi F_xi^T + F * F_xixi."""
        xi = _check_points(xi, self.dim)
        g = self.gradient(xi)
        return _outer(g, g) + self.value(xi)[..., None, None] * self.hessian(xi)

    def a_p_matrix(self, xi, p: float) -> np.ndarray:
        """Hessian of F^p/p:  a_p = F^(p-2) (a + (p-2) F_xi F_xi^T)."""
        if p <= 1.0:
            raise NormError("a_p requires p > 1")
        xi = _check_points(xi, self.dim)
        g = self.gradient(xi)
        a = self.a_matrix(xi)
        f = self.value(xi)
        return f[..., None, None] ** (p - 2.0) * (a + (p - 2.0) * _outer(g, g))

    # -- dual ----------------------------------------------------------------

    def has_closed_dual(self) -> bool:
        return self._dual is not None

    def dual_value(self, x) -> np.ndarray:
        x = _check_points(x, self.dim)
        if self._dual is not None:
            return self._dual.value(x)
        return self._dual_sup(x)[0]

    def dual_gradient(self, x) -> np.ndarray:
        x = _check_points(x, self.dim)
        if self._dual is not None:
            return self._dual.gradient(x)
        return self._dual_sup(x)[1]

    def dual_value_and_gradient(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Dual value and gradient from a single evaluation pass."""
        x = _check_points(x, self.dim)
        if self._dual is not None:
            return self._dual.value(x), self._dual.gradient(x)
        return self._dual_sup(x)

    def dual_hessian(self, x) -> np.ndarray:
        x = _check_points(x, self.dim)
        if self._dual is not None:
            return self._dual.hessian(x)
        val, grad = self._dual_sup(x)
        a_inv = np.linalg.inv(self.a_matrix(grad))
        return (a_inv - _outer(grad, grad)) / val[..., None, None]

    # -- numerical dual ------------------------------------------------------

    def eval_all(self, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient, and a-matrix in one pass."""
        xi = _check_points(xi, self.dim)
        f = self.value(xi)
        g = self.gradient(xi)
        a = _outer(g, g) + f[..., None, None] * self.hessian(xi)
        return f, g, a

    def _dual_sup(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """sup_{F(xi)=1} <xi, x> by multi-start projected ascent.

        Returns (F*(x), maximiser); the maximiser is the dual gradient.
        """
        return gauge_sup(self.eval_all, x, self.dim, value_fn=self.value)


def gauge_sup(evaluate, x, dim, starts: int = 8, max_iter: int = 200,
              tol: float = 1e-10, value_fn=None):
    """Maximise <xi, x> over the unit ball of a gauge.

    ``evaluate(xi) -> (value, gradient, a_matrix)`` describes the gauge.
    Projected ascent on the unit gauge sphere, preconditioned with the
    inverse of the squared-gauge Hessian (a Riemannian Newton step near
    the maximiser), with multi-start to cope with nearly flat spheres.
    Rows retire once their tangential residual is below ``tol`` or their
    objective has reached the attainable floating-point floor.
    """
    if value_fn is None:
        value_fn = lambda v: evaluate(v)[0]
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, dim)
    nrows = pts.shape[0]
    scale = np.linalg.norm(pts, axis=-1, keepdims=True)
    xhat = pts / scale

    rng = np.random.default_rng(1234)
    probes = rng.standard_normal((starts - 1, dim))
    probes /= np.linalg.norm(probes, axis=-1, keepdims=True)
    cand0 = np.concatenate([xhat[:, None, :],
                            xhat[:, None, :] + 0.8 * probes[None, :, :]], axis=1)
    xi = cand0 / value_fn(cand0)[..., None]

    xb = xhat[:, None, :]
    step = np.full((nrows, starts), 0.5)
    obj = np.einsum("rsi,rsi->rs", xi, xb)
    eye = np.eye(dim)
    stalled = np.zeros(nrows, dtype=int)
    resid_floor = np.full(nrows, np.inf)
    active = np.arange(nrows)
    for _ in range(max_iter):
        xia, xba = xi[active], xb[active]
        _, fgrad, a = evaluate(xia)
        coef = (np.einsum("rsi,rsi->rs", xba, fgrad)
                / np.einsum("rsi,rsi->rs", fgrad, fgrad))
        resid = xba - coef[..., None] * fgrad
        rbest = np.linalg.norm(resid, axis=-1).min(axis=1)
        resid_floor[active] = rbest
        done = (rbest < tol) | (stalled[active] >= 4)
        if np.all(done):
            break
        keep = ~done
        active = active[keep]
        xia, xba, resid, a = xia[keep], xba[keep], resid[keep], a[keep]
        # tiny ridge keeps the preconditioner invertible for degenerate gauges
        tr = np.einsum("rsii->rs", a)
        a = a + 1e-12 * tr[..., None, None] * eye
        direction = np.linalg.solve(a, resid[..., None])[..., 0]
        cand = xia + step[active][..., None] * direction
        cand /= value_fn(cand)[..., None]
        cobj = np.einsum("rsi,rsi->rs", cand, xba)
        ok = cobj > obj[active]
        gain = np.where(ok, cobj - obj[active], 0.0).max(axis=1)
        xi[active] = np.where(ok[..., None], cand, xia)
        obj[active] = np.where(ok, cobj, obj[active])
        step[active] = np.where(ok, np.minimum(step[active] * 1.5, 4.0),
                                step[active] * 0.5)
        stalled[active] = np.where(gain <= 1e-15, stalled[active] + 1, 0)
    if np.any(resid_floor > 1e-7):
        raise NormError(f"dual gauge ascent failed to converge within {max_iter} iterations")
    best = np.argmax(obj, axis=1)
    rows = np.arange(nrows)
    maximiser = xi[rows, best]
    val = obj[rows, best] * scale[:, 0]
    return val.reshape(shape), maximiser.reshape(shape + (dim,))


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

class EuclideanNorm(NormEvaluator):
    def __init__(self, spec: NormSpec):
        super().__init__(spec)
        self._dual = self

    def value(self, xi):
        xi = _check_points(xi, self.dim)
        return np.linalg.norm(xi, axis=-1)

    def gradient(self, xi):
        xi = _check_points(xi, self.dim)
        return xi / np.linalg.norm(xi, axis=-1, keepdims=True)

    def hessian(self, xi):
        xi = _check_points(xi, self.dim)
        r = np.linalg.norm(xi, axis=-1)
        u = xi / r[..., None]
        eye = np.broadcast_to(np.eye(self.dim), xi.shape + (self.dim,))
        return (eye - _outer(u, u)) / r[..., None, None]


class EllipsoidNorm(NormEvaluator):
    def __init__(self, spec: NormSpec):
        super().__init__(spec)
        a = spec.matrix
        if a is None or a.shape != (self.dim, self.dim):
            raise NormError("ellipsoid norm needs a square matrix")
        if not np.allclose(a, a.T, atol=1e-12):
            raise NormError("ellipsoid matrix must be symmetric")
        if np.linalg.eigvalsh(a).min() <= 0.0:
            raise NormError("ellipsoid matrix must be positive definite")
        self.A = 0.5 * (a + a.T)
        dual_spec = NormSpec.ellipsoid(np.linalg.inv(self.A))
        dual = EllipsoidNorm.__new__(EllipsoidNorm)
        NormEvaluator.__init__(dual, dual_spec)
        dual.A = dual_spec.matrix
        dual._dual = self
        self._dual = dual

    def value(self, xi):
        xi = _check_points(xi, self.dim)
        return np.sqrt(np.einsum("...i,ij,...j->...", xi, self.A, xi))

    def gradient(self, xi):
        xi = _check_points(xi, self.dim)
        ax = xi @ self.A
        return ax / self.value(xi)[..., None]

    def hessian(self, xi):
        xi = _check_points(xi, self.dim)
        f = self.value(xi)
        ax = xi @ self.A
        return self.A / f[..., None, None] - _outer(ax, ax) / f[..., None, None] ** 3


class PowerNorm(NormEvaluator):
    """l^q norm, 1 < q < inf.  Smooth off the coordinate planes for q < 2."""

    def __init__(self, spec: NormSpec):
        super().__init__(spec)
        q = spec.exponent
        if q is None or not (1.0 < q < np.inf):
            raise NormError("power norm exponent must satisfy 1 < q < inf")
        self.q = float(q)
        if abs(self.q - 2.0) > 1e-14:
            dual_spec = NormSpec.power(self.q / (self.q - 1.0), self.dim)
            dual = PowerNorm.__new__(PowerNorm)
            NormEvaluator.__init__(dual, dual_spec)
            dual.q = dual_spec.exponent
            dual._dual = self
            self._dual = dual
        else:
            self._dual = self

    def value(self, xi):
        xi = _check_points(xi, self.dim)
        m = np.max(np.abs(xi), axis=-1, keepdims=True)
        return (m[..., 0] * np.sum((np.abs(xi) / m) ** self.q, axis=-1) ** (1.0 / self.q))

    def gradient(self, xi):
        xi = _check_points(xi, self.dim)
        f = self.value(xi)
        return np.sign(xi) * (np.abs(xi) / f[..., None]) ** (self.q - 1.0)

    def hessian(self, xi):
        xi = _check_points(xi, self.dim)
        f = self.value(xi)
        t = np.abs(xi) / f[..., None]
        with np.errstate(divide="ignore"):
            diag = t ** (self.q - 2.0)
        grad = np.sign(xi) * t ** (self.q - 1.0)
        h = -_outer(grad, grad)
        idx = np.arange(self.dim)
        h[..., idx, idx] += diag
        return (self.q - 1.0) / f[..., None, None] * h


class SmoothedPolytopeNorm(NormEvaluator):
    """s-power mean of linear gauges blended with eps times the Euclidean norm."""

    def __init__(self, spec: NormSpec):
        super().__init__(spec)
        w = spec.directions
        if w is None or w.ndim != 2 or w.shape[1] != self.dim:
            raise NormError("directions must be a (K, n) array")
        if np.linalg.matrix_rank(w) < self.dim:
            raise NormError("polytope directions must span R^n")
        s = spec.power
        if s < 4 or s % 2 != 0:
            raise NormError("polytope exponent must be an even integer >= 4")
        if spec.blend < 0.0:
            raise NormError("blend must be nonnegative")
        self.W = w
        self.s = s
        self.eps = float(spec.blend)

    def _h_parts(self, xi):
        """Raw s-th power H(xi) and its first two derivatives."""
        s = self.s
        u = xi @ self.W.T                              # (..., K)
        r2 = np.sum(xi * xi, axis=-1)
        h = np.sum(u**s, axis=-1) + self.eps**s * r2 ** (s / 2)
        dh = s * np.einsum("...k,ki->...i", u ** (s - 1), self.W)
        dh = dh + self.eps**s * s * r2[..., None] ** (s / 2 - 1) * xi
        d2h = s * (s - 1) * np.einsum("...k,ki,kj->...ij", u ** (s - 2), self.W, self.W)
        eye = np.eye(self.dim)
        d2h = d2h + self.eps**s * s * r2[..., None, None] ** (s / 2 - 1) * eye
        d2h = d2h + (self.eps**s * s * (s - 2)
                     * r2[..., None, None] ** (s / 2 - 2) * _outer(xi, xi))
        return h, dh, d2h

    def value(self, xi):
        xi = _check_points(xi, self.dim)
        r = np.linalg.norm(xi, axis=-1)
        h, _, _ = self._h_parts(xi / r[..., None])
        return r * h ** (1.0 / self.s)

    def gradient(self, xi):
        xi = _check_points(xi, self.dim)
        r = np.linalg.norm(xi, axis=-1, keepdims=True)
        h, dh, _ = self._h_parts(xi / r)
        return h[..., None] ** (1.0 / self.s - 1.0) * dh / self.s

    def hessian(self, xi):
        xi = _check_points(xi, self.dim)
        r = np.linalg.norm(xi, axis=-1)
        h, dh, d2h = self._h_parts(xi / r[..., None])
        s = self.s
        out = h[..., None, None] ** (1.0 / s - 1.0) * d2h / s
        out = out + ((1.0 / s) * (1.0 / s - 1.0)
                     * h[..., None, None] ** (1.0 / s - 2.0) * _outer(dh, dh))
        return out / r[..., None, None]

    def eval_all(self, xi):
        # single raw-power pass; the generic path would redo it three times
        xi = _check_points(xi, self.dim)
        r = np.linalg.norm(xi, axis=-1)
        h, dh, d2h = self._h_parts(xi / r[..., None])
        s = self.s
        f = r * h ** (1.0 / s)
        g = h[..., None] ** (1.0 / s - 1.0) * dh / s
        hess = h[..., None, None] ** (1.0 / s - 1.0) * d2h / s
        hess = hess + ((1.0 / s) * (1.0 / s - 1.0)
                       * h[..., None, None] ** (1.0 / s - 2.0) * _outer(dh, dh))
        hess = hess / r[..., None, None]
        return f, g, _outer(g, g) + f[..., None, None] * hess


_FAMILIES = {
    "euclidean": EuclideanNorm,
    "ellipsoid": EllipsoidNorm,
    "power": PowerNorm,
    "smoothed_polytope": SmoothedPolytopeNorm,
}


def make_norm(spec: NormSpec) -> NormEvaluator:
    """Build the evaluator for a norm specification, validating it."""
    if spec.dim < 2:
        raise NormError("dimension must be at least 2")
    try:
        cls = _FAMILIES[spec.family]
    except KeyError:
        raise NormError(f"unknown norm family {spec.family!r}") from None
    return cls(spec)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormValidationReport:
    """Sampled residuals of the structural norm identities.

    ``euler``            |<F_xi, xi> - F| / F  and the dual analogue
    ``hessian_null``     |F_xixi xi|
    ``unit_sphere``      |F(dual_grad(x)) - 1| and |F*(F_xi(xi)) - 1|
    ``inversion``        |F*(x) F_xi(dual_grad(x)) - x| / |x|
    ``ellipticity_min``  smallest eigenvalue of grad^2(F^2/2) over the samples
    """

    label: str
    samples: int
    euler: float
    hessian_null: float
    unit_sphere: float
    inversion: float
    ellipticity_min: float
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "samples": self.samples,
            "euler": self.euler,
            "hessian_null": self.hessian_null,
            "unit_sphere": self.unit_sphere,
            "inversion": self.inversion,
            "ellipticity_min": self.ellipticity_min,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def validate_norm(norm: NormEvaluator, sample_count: int = 1000,
                  seed: int = 0, tolerance: float | None = None) -> NormValidationReport:
    """Check the structural identities on random sphere directions.

    The probe set always includes the coordinate axes (and the polytope
    directions when applicable) so that degenerate ellipticity on those
    rays is detected rather than missed by random sampling.
    """
    if sample_count < 1:
        raise NormError("sample_count must be positive")
    if tolerance is None:
        tolerance = 1e-9 if norm.has_closed_dual() else 1e-6
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((sample_count, norm.dim))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    probes = [xi, np.eye(norm.dim), -np.eye(norm.dim)]
    if isinstance(norm, SmoothedPolytopeNorm):
        probes.append(norm.W / np.linalg.norm(norm.W, axis=-1, keepdims=True))
    xi = np.concatenate(probes, axis=0)
    x = rng.standard_normal((sample_count, norm.dim))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)

    f = norm.value(xi)
    g = norm.gradient(xi)
    euler_p = np.abs(np.einsum("...i,...i->...", g, xi) - f) / f
    fo, go = norm.dual_value_and_gradient(x)
    euler_d = np.abs(np.einsum("...i,...i->...", go, x) - fo) / fo
    euler = max(euler_p.max(), euler_d.max())

    hnull = np.abs(np.einsum("...ij,...j->...i", norm.hessian(xi), xi)).max()

    unit = max(np.abs(norm.value(go) - 1.0).max(),
               np.abs(norm.dual_value(g) - 1.0).max())

    inv = np.linalg.norm(fo[..., None] * norm.gradient(go) - x, axis=-1)
    inversion = (inv / np.linalg.norm(x, axis=-1)).max()

    ellipticity = float(np.linalg.eigvalsh(norm.a_matrix(xi)).min())

    passed = (euler < tolerance and hnull < tolerance
              and unit < tolerance and inversion < tolerance
              and ellipticity > 0.0)
    return NormValidationReport(
        label=norm.spec.label(), samples=int(xi.shape[0]),
        euler=float(euler), hessian_null=float(hnull), unit_sphere=float(unit),
        inversion=float(inversion), ellipticity_min=ellipticity,
        tolerance=float(tolerance), passed=bool(passed))
