import numpy as np
import pytest

from anisocap.quadrature import (
    build_angular_grid,
    fourier_diff,
    fourier_diff_adjoint,
    lagrange_diff_matrix,
)


def test_sphere_weights_sum_to_area():
    g3 = build_angular_grid(3, 16, 32)
    assert g3.weights.sum() == pytest.approx(4 * np.pi, rel=1e-13)
    g2 = build_angular_grid(2, n_azimuth=64)
    assert g2.weights.sum() == pytest.approx(2 * np.pi, rel=1e-13)


def test_nodes_are_unit_and_off_axes():
    g = build_angular_grid(3, 8, 16)
    np.testing.assert_allclose(np.linalg.norm(g.nodes, axis=-1), 1.0, rtol=1e-14)
    # offset grid keeps nodes off the coordinate planes
    assert np.abs(g.nodes).min() > 1e-8


def test_polynomial_integration_is_exact():
    g = build_angular_grid(3, 8, 16)
    x, y, z = g.nodes.T
    # moments of degree-2 monomials on the sphere: int x_i^2 = 4pi/3
    for m in (x * x, y * y, z * z):
        assert (g.weights * m).sum() == pytest.approx(4 * np.pi / 3, rel=1e-12)
    assert abs((g.weights * x * y).sum()) < 1e-13


def test_lagrange_diff_matrix_differentiates_polynomials():
    x, _ = np.polynomial.legendre.leggauss(10)
    d = lagrange_diff_matrix(x)
    np.testing.assert_allclose(d @ x**4, 4 * x**3, atol=1e-11)
    np.testing.assert_allclose(d @ np.ones_like(x), 0.0, atol=1e-12)


def test_fourier_diff_on_trig():
    n = 32
    t = (np.arange(n) + 0.5) * 2 * np.pi / n
    f = np.sin(3 * t) + 0.5 * np.cos(5 * t)
    df = 3 * np.cos(3 * t) - 2.5 * np.sin(5 * t)
    np.testing.assert_allclose(fourier_diff(f), df, atol=1e-12)


def test_fourier_adjoint_identity():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 16))
    lhs = np.dot(fourier_diff(a), b)
    rhs = np.dot(a, fourier_diff_adjoint(b))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_angular_differentiate_and_adjoint():
    g = build_angular_grid(3, 12, 24)
    x, y, z = g.nodes.T
    f = x * y + z**2
    dmu, dphi = g.differentiate(f)
    # f as function of (mu, phi): x*y = (1-mu^2) cos sin, z^2 = mu^2
    mu = np.repeat(g.mu, g.n_azimuth)
    phi = np.tile(g.phi, g.n_polar)
    np.testing.assert_allclose(dmu, -2 * mu * np.cos(phi) * np.sin(phi) + 2 * mu,
                               atol=1e-10)
    np.testing.assert_allclose(dphi, (1 - mu**2) * np.cos(2 * phi), atol=1e-10)

    rng = np.random.default_rng(1)
    u = rng.standard_normal(g.size)
    tm, tp = rng.standard_normal((2, g.size))
    du = g.differentiate(u)
    lhs = np.dot(du[0], tm) + np.dot(du[1], tp)
    rhs = np.dot(u, g.differentiate_adjoint(tm, tp))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_resolution_validation():
    with pytest.raises(ValueError):
        build_angular_grid(3, 2, 16)
    with pytest.raises(ValueError):
        build_angular_grid(2, n_azimuth=3)
    with pytest.raises(ValueError):
        build_angular_grid(4, 8, 8)
