"""Star-shaped computational domains and boundary curvature quantities.

Every domain is described by a 1-homogeneous C^2 gauge G with G = 1 on the
boundary and G(x) < 1 inside, so the radial profile over the sphere is
rho(theta) = 1/G(theta).  Working with the gauge rather than the profile
keeps all boundary derivatives closed form:

* outward Euclidean normal        nu = grad G / |grad G|
* anisotropic mean curvature      H_F = tr(F_xixi(grad G) grad^2 G)
* anisotropic shape spectrum      eigenvalues of F_xixi(grad G) grad^2 G

The curvature formulas are invariant under the choice of defining
function because F_xixi(xi) xi = 0.  Surface quadrature weights come from
the star-shaped area element dsigma = rho^(n-1)/<nu, theta> dtheta, which
needs no angular derivatives of the profile.

Signs follow the outward normal: H_F > 0 on convex boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .norms import NormEvaluator, _outer
from .quadrature import AngularGrid, build_angular_grid


class DomainError(ValueError):
    """Invalid domain specification or request."""


# ---------------------------------------------------------------------------
# gauges
# ---------------------------------------------------------------------------

class RadialGauge:
    """1-homogeneous defining function of a star-shaped boundary {G = 1}."""

    dim: int

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError


class BallGauge(RadialGauge):
    def __init__(self, dim: int, radius: float):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.dim = dim
        self.radius = float(radius)

    def value(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) / self.radius

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return x / (np.linalg.norm(x, axis=-1, keepdims=True) * self.radius)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        u = x / r[..., None]
        eye = np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,))
        return (eye - _outer(u, u)) / (r[..., None, None] * self.radius)


class WulffGauge(RadialGauge):
    """Boundary = Wulff shape of radius R: G = F*(x)/R."""

    def __init__(self, norm: NormEvaluator, radius: float):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.norm = norm
        self.dim = norm.dim
        self.radius = float(radius)

    def value(self, x):
        return self.norm.dual_value(x) / self.radius

    def gradient(self, x):
        return self.norm.dual_gradient(x) / self.radius

    def hessian(self, x):
        return self.norm.dual_hessian(x) / self.radius


class EllipsoidGauge(RadialGauge):
    def __init__(self, semi_axes: Sequence[float]):
        axes = np.asarray(semi_axes, dtype=float)
        if np.any(axes <= 0):
            raise DomainError("semi-axes must be positive")
        self.dim = axes.size
        self.semi_axes = axes
        self.M = np.diag(1.0 / axes**2)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", x, self.M, x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return (x @ self.M) / self.value(x)[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        g = self.value(x)
        mx = x @ self.M
        return self.M / g[..., None, None] - _outer(mx, mx) / g[..., None, None] ** 3


_LEGENDRE = {
    2: (lambda m: 0.5 * (3 * m**2 - 1),
        lambda m: 3.0 * m,
        lambda m: 3.0 * np.ones_like(m)),
    3: (lambda m: 0.5 * (5 * m**3 - 3 * m),
        lambda m: 0.5 * (15 * m**2 - 3),
        lambda m: 15.0 * m),
    4: (lambda m: 0.125 * (35 * m**4 - 30 * m**2 + 3),
        lambda m: 0.5 * (35 * m**3 - 15 * m),
        lambda m: 0.5 * (105 * m**2 - 15)),
}


class PerturbedWulffGauge(RadialGauge):
    """Wulff shape of radius R with a zonal harmonic bump on the profile.

    rho(theta) = R (1 + amplitude * P_l(theta_z)) / F*(theta) in dimension 3
    (P_l normalised to max 1); in dimension 2 the bump is cos(l * phi).
    """

    def __init__(self, norm: NormEvaluator, radius: float, amplitude: float,
                 mode: int = 2):
        if radius <= 0:
            raise DomainError("radius must be positive")
        if abs(amplitude) >= 0.5:
            raise DomainError("perturbation amplitude must stay below 0.5")
        if norm.dim == 3 and mode not in _LEGENDRE:
            raise DomainError(f"zonal mode must be one of {sorted(_LEGENDRE)}")
        self.norm = norm
        self.dim = norm.dim
        self.radius = float(radius)
        self.amplitude = float(amplitude)
        self.mode = int(mode)

    # bump B(x) is the 0-homogeneous extension of the harmonic profile
    def _bump(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        if self.dim == 3:
            p, dp, d2p = _LEGENDRE[self.mode]
            mu = x[..., 2] / r
            gmu = np.zeros_like(x)
            gmu[..., 2] = 1.0 / r
            gmu -= (mu / r)[..., None] * (x / r[..., None])
            hmu = np.zeros(x.shape + (self.dim,))
            e3 = np.zeros(self.dim)
            e3[2] = 1.0
            xo = x / r[..., None]
            hmu -= (_outer(np.broadcast_to(e3, x.shape), xo)
                    + _outer(xo, np.broadcast_to(e3, x.shape))) / r[..., None, None] ** 2
            eye = np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,))
            hmu -= mu[..., None, None] * eye / r[..., None, None] ** 2
            hmu += 3.0 * mu[..., None, None] * _outer(xo, xo) / r[..., None, None] ** 2
            b = p(mu)
            gb = dp(mu)[..., None] * gmu
            hb = (d2p(mu)[..., None, None] * _outer(gmu, gmu)
                  + dp(mu)[..., None, None] * hmu)
            return b, gb, hb
        phi = np.arctan2(x[..., 1], x[..., 0])
        r2 = r**2
        gphi = np.stack([-x[..., 1], x[..., 0]], axis=-1) / r2[..., None]
        hphi = np.empty(x.shape + (2,))
        hphi[..., 0, 0] = 2 * x[..., 0] * x[..., 1]
        hphi[..., 0, 1] = x[..., 1] ** 2 - x[..., 0] ** 2
        hphi[..., 1, 0] = hphi[..., 0, 1]
        hphi[..., 1, 1] = -2 * x[..., 0] * x[..., 1]
        hphi /= r2[..., None, None] ** 2
        l = self.mode
        b = np.cos(l * phi)
        gb = -l * np.sin(l * phi)[..., None] * gphi
        hb = (-l**2 * np.cos(l * phi)[..., None, None] * _outer(gphi, gphi)
              - l * np.sin(l * phi)[..., None, None] * hphi)
        return b, gb, hb

    def _denominator(self, x):
        b, gb, hb = self._bump(x)
        d = self.radius * (1.0 + self.amplitude * b)
        return d, self.radius * self.amplitude * gb, self.radius * self.amplitude * hb

    def value(self, x):
        return self.norm.dual_value(x) / self._denominator(x)[0]

    def gradient(self, x):
        u, gu = self.norm.dual_value_and_gradient(x)
        d, gd, _ = self._denominator(x)
        return (gu - (u / d)[..., None] * gd) / d[..., None]

    def hessian(self, x):
        u, gu = self.norm.dual_value_and_gradient(x)
        hu = self.norm.dual_hessian(x)
        d, gd, hd = self._denominator(x)
        dd = d[..., None, None]
        out = hu / dd
        out -= (_outer(gu, gd) + _outer(gd, gu)) / dd**2
        out -= u[..., None, None] * hd / dd**2
        out += 2.0 * u[..., None, None] * _outer(gd, gd) / dd**3
        return out


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StarDomain:
    """Bounded domain star-shaped about the origin, boundary {gauge = 1}."""

    dim: int
    gauge: RadialGauge
    label: str

    @staticmethod
    def ball(radius: float, dim: int = 3) -> "StarDomain":
        return StarDomain(dim, BallGauge(dim, radius), f"ball(R={radius:g})")

    @staticmethod
    def wulff(norm: NormEvaluator, radius: float = 1.0) -> "StarDomain":
        return StarDomain(norm.dim, WulffGauge(norm, radius),
                          f"wulff(R={radius:g})")

    @staticmethod
    def ellipsoid(semi_axes) -> "StarDomain":
        g = EllipsoidGauge(semi_axes)
        axes = ",".join(f"{a:g}" for a in g.semi_axes)
        return StarDomain(g.dim, g, f"ellipsoid({axes})")

    @staticmethod
    def perturbed_wulff(norm: NormEvaluator, radius: float = 1.0,
                        amplitude: float = 0.1, mode: int = 2) -> "StarDomain":
        return StarDomain(norm.dim,
                          PerturbedWulffGauge(norm, radius, amplitude, mode),
                          f"perturbed_wulff(R={radius:g}, a={amplitude:g}, l={mode})")

    def radial_profile(self, theta) -> np.ndarray:
        """rho(theta) = 1/G(theta) for unit directions theta."""
        return 1.0 / self.gauge.value(theta)

    def max_radius(self, resolution=(32, 64)) -> float:
        grid = _angular(self.dim, resolution)
        return float(self.radial_profile(grid.nodes).max())


def _angular(dim: int, resolution) -> AngularGrid:
    if isinstance(resolution, AngularGrid):
        return resolution
    if dim == 2:
        n = resolution if np.isscalar(resolution) else resolution[-1]
        return build_angular_grid(2, n_azimuth=int(n))
    n_polar, n_azimuth = resolution
    return build_angular_grid(3, n_polar=int(n_polar), n_azimuth=int(n_azimuth))


@dataclass(frozen=True)
class SurfaceSample:
    """One boundary quadrature point with its local geometry."""

    point: np.ndarray
    normal: np.ndarray
    weight: float
    gauge_gradient: np.ndarray
    gauge_hessian: np.ndarray


class SurfaceQuadrature:
    """Boundary samples of a star domain; sequence of :class:`SurfaceSample`.

    Arrays are exposed directly for vectorised integration: ``points``,
    ``normals``, ``weights`` (Euclidean area weights), ``gauge_gradients``,
    ``gauge_hessians``, plus the generating angular grid.
    """

    def __init__(self, domain: StarDomain, angular: AngularGrid):
        self.domain = domain
        self.angular = angular
        theta = angular.nodes
        rho = domain.radial_profile(theta)
        pts = rho[:, None] * theta
        g = domain.gauge.gradient(pts)
        h = domain.gauge.hessian(pts)
        nu = g / np.linalg.norm(g, axis=-1, keepdims=True)
        cosine = np.einsum("ij,ij->i", nu, theta)
        if np.any(cosine <= 0):
            raise DomainError("boundary is not star-shaped about the origin")
        self.rho = rho
        self.points = pts
        self.normals = nu
        self.weights = angular.weights * rho ** (domain.dim - 1) / cosine
        self.gauge_gradients = g
        self.gauge_hessians = h

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> SurfaceSample:
        return SurfaceSample(self.points[i], self.normals[i],
                             float(self.weights[i]),
                             self.gauge_gradients[i], self.gauge_hessians[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def boundary_quadrature(domain: StarDomain, resolution=(32, 64)) -> SurfaceQuadrature:
    """Boundary samples with outward normals and exact parametric weights."""
    grid = _angular(domain.dim, resolution)
    if domain.dim == 2 and grid.n_azimuth < 4:
        raise DomainError("resolution must be at least 4")
    return SurfaceQuadrature(domain, grid)


def volume(domain: StarDomain, resolution=(32, 64)) -> float:
    """|Omega| = (1/n) int rho(theta)^n dtheta."""
    grid = _angular(domain.dim, resolution)
    rho = domain.radial_profile(grid.nodes)
    return float(np.sum(grid.weights * rho**domain.dim) / domain.dim)


def anisotropic_area(domain: StarDomain, norm: NormEvaluator,
                     quadrature: SurfaceQuadrature | None = None,
                     resolution=(32, 64)) -> float:
    """|dOmega|_F = int F(nu) dsigma."""
    quad = quadrature or boundary_quadrature(domain, resolution)
    return float(np.sum(norm.value(quad.normals) * quad.weights))


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------

def _shape_products(norm: NormEvaluator, gauge_grad, gauge_hess):
    """S1 and S2 of the anisotropic shape matrix F_xixi(grad G) grad^2 G."""
    m = np.einsum("...ik,...kj->...ij", norm.hessian(gauge_grad), gauge_hess)
    s1 = np.einsum("...ii->...", m)
    s2 = 0.5 * (s1**2 - np.einsum("...ij,...ji->...", m, m))
    return s1, s2


def mean_curvature_samples(quad: SurfaceQuadrature, norm: NormEvaluator) -> np.ndarray:
    """H_F at every quadrature sample (outward-normal convention)."""
    s1, _ = _shape_products(norm, quad.gauge_gradients, quad.gauge_hessians)
    return s1


def pinch_samples(quad: SurfaceQuadrature, norm: NormEvaluator) -> np.ndarray:
    """Squared traceless part of the anisotropic second fundamental form."""
    n = quad.domain.dim
    s1, s2 = _shape_products(norm, quad.gauge_gradients, quad.gauge_hessians)
    return (n - 2) / (n - 1) * s1**2 - 2.0 * s2


def anisotropic_mean_curvature(domain: StarDomain, norm: NormEvaluator,
                               sample: SurfaceSample) -> float:
    """H_F at one boundary sample, positive on convex domains."""
    m = norm.hessian(sample.gauge_gradient) @ sample.gauge_hessian
    return float(np.trace(m))


def anisotropic_pinch(domain: StarDomain, norm: NormEvaluator,
                      sample: SurfaceSample) -> float:
    """(n-2)/(n-1) sigma_1^2 - 2 sigma_2 of the anisotropic curvatures."""
    n = domain.dim
    m = norm.hessian(sample.gauge_gradient) @ sample.gauge_hessian
    s1 = np.trace(m)
    s2 = 0.5 * (s1**2 - np.trace(m @ m))
    return float((n - 2) / (n - 1) * s1**2 - 2.0 * s2)


def is_convex(domain: StarDomain, resolution=(32, 64), tol: float = 1e-8) -> bool:
    """Check convexity through the Euclidean principal curvature spectrum.

    The boundary is convex iff the shape matrix restricted to the tangent
    space is positive semidefinite; its eigenvalues are those of the
    Euclidean shape matrix, which has one structural zero along the
    normal.
    """
    quad = boundary_quadrature(domain, resolution)
    g = quad.gauge_gradients
    gn = np.linalg.norm(g, axis=-1)
    nu = g / gn[..., None]
    eye = np.eye(domain.dim)
    proj = eye[None] - _outer(nu, nu)
    shape_m = np.einsum("...ik,...kl,...lj->...ij",
                        proj, quad.gauge_hessians / gn[..., None, None], proj)
    ev = np.linalg.eigvalsh(shape_m)
    # spectrum = principal curvatures plus one structural zero
    return bool(np.all(ev[:, 0] > -tol * np.abs(ev).max()))
