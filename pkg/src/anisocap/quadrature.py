"""Structured quadrature and differentiation on the unit sphere.

The angular grid used throughout is a tensor product of Gauss-Legendre
nodes in mu = cos(polar angle) and a uniform, half-step-offset azimuthal
grid (n = 3), or a uniform offset grid on the circle (n = 2).  The offset
keeps every node strictly away from the poles and the coordinate planes,
where some of the built-in gauges lose smoothness.

Derivatives in mu use the spectral (barycentric Lagrange) differentiation
matrix on the Gauss nodes; derivatives in phi use the FFT.  Both are exact
for the polynomial / trigonometric spaces the quadrature resolves, so the
angular discretisation error of smooth fields is negligible next to the
radial one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for n-point Gauss-Legendre quadrature on [-1, 1]."""
    if n < 1:
        raise ValueError("need at least one quadrature node")
    return np.polynomial.legendre.leggauss(n)


def lagrange_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Spectral differentiation matrix for the Lagrange basis on nodes x.

    Barycentric weights are computed in log space; only their ratios enter
    the matrix, so the scaling cannot under- or overflow for the node
    counts used here.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    logw = -np.sum(np.log(np.abs(dx)), axis=1)
    sgn = np.prod(np.sign(dx), axis=1)
    w = sgn * np.exp(logw - logw.max())
    d = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def fourier_diff(f: np.ndarray, axis: int = -1) -> np.ndarray:
    """Spectral derivative of samples of a 2*pi-periodic function."""
    n = f.shape[axis]
    spec = np.fft.rfft(f, axis=axis)
    k = np.arange(spec.shape[axis])
    if n % 2 == 0:
        k = k.copy()
        k[-1] = 0  # Nyquist mode carries no derivative information
    shape = [1] * f.ndim
    shape[axis] = -1
    spec = spec * (1j * k.reshape(shape))
    return np.fft.irfft(spec, n=n, axis=axis)


@dataclass(frozen=True)
class AngularGrid:
    """Quadrature nodes, weights, and tangential derivative operators on S^(n-1).

    ``nodes`` are unit vectors, ``weights`` sum to the sphere area.  For a
    point x = r*theta the gradients of the angular coordinates are
    ``tangent_mu / r`` and ``tangent_phi / r`` (single azimuthal tangent
    in dimension 2).
    """

    dim: int
    nodes: np.ndarray         # (M, dim)
    weights: np.ndarray       # (M,)
    n_polar: int
    n_azimuth: int
    mu: np.ndarray | None
    phi: np.ndarray
    dmu_matrix: np.ndarray | None = field(repr=False, default=None)
    tangent_mu: np.ndarray | None = field(repr=False, default=None)
    tangent_phi: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View a flat (..., M) nodal array as (..., n_polar, n_azimuth)."""
        if self.dim == 2:
            return values
        return values.reshape(values.shape[:-1] + (self.n_polar, self.n_azimuth))

    def flatten(self, values: np.ndarray) -> np.ndarray:
        if self.dim == 2:
            return values
        return values.reshape(values.shape[:-2] + (self.size,))

    def differentiate(self, values: np.ndarray) -> tuple[np.ndarray, ...]:
        """Tangential-coordinate derivatives of nodal data (..., M).

        Returns (d/dmu, d/dphi) for dim 3 and (d/dphi,) for dim 2.
        """
        if self.dim == 2:
            return (fourier_diff(values, axis=-1),)
        g = self.reshape(values)
        dmu = np.einsum("ij,...jk->...ik", self.dmu_matrix, g)
        dphi = fourier_diff(g, axis=-1)
        return self.flatten(dmu), self.flatten(dphi)

    def differentiate_adjoint(self, *cotangents: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`differentiate` (transposed operators)."""
        if self.dim == 2:
            (tphi,) = cotangents
            return fourier_diff_adjoint(tphi, axis=-1)
        tmu, tphi = cotangents
        g = np.einsum("ji,...jk->...ik", self.dmu_matrix, self.reshape(tmu))
        g = g + fourier_diff_adjoint(self.reshape(tphi), axis=-1)
        return self.flatten(g)


def fourier_diff_adjoint(f: np.ndarray, axis: int = -1) -> np.ndarray:
    """Adjoint of :func:`fourier_diff` in the Euclidean inner product."""
    return -fourier_diff(f, axis=axis)


def build_angular_grid(dim: int, n_polar: int = 32, n_azimuth: int = 64) -> AngularGrid:
    """Angular quadrature grid; ``n_polar`` is ignored for dim 2."""
    if dim == 2:
        if n_azimuth < 4:
            raise ValueError("angular resolution must be at least 4")
        dphi = 2.0 * np.pi / n_azimuth
        phi = (np.arange(n_azimuth) + 0.5) * dphi
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        weights = np.full(n_azimuth, dphi)
        tangent = np.stack([-np.sin(phi), np.cos(phi)], axis=-1)
        return AngularGrid(dim=2, nodes=nodes, weights=weights, n_polar=1,
                           n_azimuth=n_azimuth, mu=None, phi=phi,
                           tangent_phi=tangent)
    if dim != 3:
        raise ValueError("only dimensions 2 and 3 are supported")
    if n_polar < 4 or n_azimuth < 4:
        raise ValueError("angular resolution must be at least 4")
    mu, wmu = gauss_legendre(n_polar)
    dphi = 2.0 * np.pi / n_azimuth
    phi = (np.arange(n_azimuth) + 0.5) * dphi
    sin_th = np.sqrt(1.0 - mu**2)
    cph, sph = np.cos(phi), np.sin(phi)
    nodes = np.empty((n_polar, n_azimuth, 3))
    nodes[..., 0] = sin_th[:, None] * cph[None, :]
    nodes[..., 1] = sin_th[:, None] * sph[None, :]
    nodes[..., 2] = mu[:, None]
    weights = (wmu[:, None] * dphi * np.ones(n_azimuth)[None, :]).ravel()
    e3 = np.array([0.0, 0.0, 1.0])
    flat = nodes.reshape(-1, 3)
    mu_flat = np.repeat(mu, n_azimuth)
    tangent_mu = e3[None, :] - mu_flat[:, None] * flat
    tangent_phi = np.empty_like(flat)
    tangent_phi[:, 0] = np.tile(-sph, n_polar) / np.repeat(sin_th, n_azimuth)
    tangent_phi[:, 1] = np.tile(cph, n_polar) / np.repeat(sin_th, n_azimuth)
    tangent_phi[:, 2] = 0.0
    return AngularGrid(dim=3, nodes=flat, weights=weights, n_polar=n_polar,
                       n_azimuth=n_azimuth, mu=mu, phi=phi,
                       dmu_matrix=lagrange_diff_matrix(mu),
                       tangent_mu=tangent_mu, tangent_phi=tangent_phi)
