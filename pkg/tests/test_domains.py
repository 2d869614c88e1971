import numpy as np
import pytest

from anisocap.domains import (
    DomainError,
    StarDomain,
    anisotropic_area,
    anisotropic_mean_curvature,
    anisotropic_pinch,
    boundary_quadrature,
    is_convex,
    mean_curvature_samples,
    pinch_samples,
    volume,
)
from anisocap.norms import NormSpec, make_norm
from anisocap.wulff import kappa, wulff_volume


@pytest.fixture(scope="module")
def euclid3():
    return make_norm(NormSpec.euclidean(3))


@pytest.fixture(scope="module")
def power4():
    return make_norm(NormSpec.power(4.0, 3))


@pytest.fixture(scope="module")
def ellipsoid_norm():
    return make_norm(NormSpec.ellipsoid(np.diag([1.0, 4.0, 9.0])))


def ellipsoid_mean_curvature(axes, point):
    """Classical mean curvature (sum of principal curvatures) of an ellipsoid.

    For the level set of g(x) = sum x_i^2/a_i^2, H = div(grad g/|grad g|).
    Evaluated in closed form through the gauge Hessian.
    """
    a = np.asarray(axes, float)
    m = np.diag(1.0 / a**2)
    g = m @ point
    gn = np.linalg.norm(g)
    return (np.trace(m) - (g @ m @ g) / gn**2) / gn


def fd_normal_variation_mean_curvature(domain, point, h=1e-5):
    """Divergence of the unit normal field by central differences."""
    div = 0.0
    for i in range(domain.dim):
        e = np.zeros(domain.dim)
        e[i] = h
        gp = domain.gauge.gradient(point + e)
        gm = domain.gauge.gradient(point - e)
        div += (gp[i] / np.linalg.norm(gp) - gm[i] / np.linalg.norm(gm)) / (2 * h)
    return div


class TestQuadrature:
    def test_sphere_area(self):
        quad = boundary_quadrature(StarDomain.ball(1.0), (32, 64))
        assert quad.weights.sum() == pytest.approx(4 * np.pi, rel=1e-9)
        np.testing.assert_allclose(np.linalg.norm(quad.normals, axis=-1), 1.0,
                                   rtol=1e-13)

    def test_ellipsoid_area_against_refined_reference(self):
        d = StarDomain.ellipsoid([1.0, 1.0, 2.0])
        coarse = boundary_quadrature(d, (24, 48)).weights.sum()
        fine = boundary_quadrature(d, (96, 192)).weights.sum()
        assert coarse == pytest.approx(fine, rel=1e-3)

    def test_wulff_radial_samples_on_unit_dual_sphere(self, power4):
        d = StarDomain.wulff(power4, 1.0)
        quad = boundary_quadrature(d, (16, 32))
        np.testing.assert_allclose(power4.dual_value(quad.points), 1.0, atol=1e-8)

    def test_sample_sequence_interface(self):
        quad = boundary_quadrature(StarDomain.ball(2.0), (8, 16))
        s = quad[3]
        assert s.weight > 0
        assert len(list(quad)) == len(quad)

    def test_resolution_floor(self):
        with pytest.raises(Exception):
            boundary_quadrature(StarDomain.ball(1.0, dim=2), 3)


class TestVolume:
    def test_ball(self):
        assert volume(StarDomain.ball(2.0)) == pytest.approx(32 * np.pi / 3, rel=1e-9)

    def test_ellipsoid(self):
        v = volume(StarDomain.ellipsoid([1.0, 1.0, 2.0]))
        assert v == pytest.approx(4 * np.pi / 3 * 2.0, rel=1e-9)

    def test_wulff_radial_matches_wulff_volume(self, power4):
        for r in (0.5, 1.0, 2.0):
            v = volume(StarDomain.wulff(power4, r), (48, 96))
            assert v == pytest.approx(r**3 * wulff_volume(power4, (48, 96)), rel=5e-3)


class TestAnisotropicArea:
    def test_euclidean_ball(self, euclid3):
        a = anisotropic_area(StarDomain.ball(1.0), euclid3)
        assert a == pytest.approx(4 * np.pi, rel=1e-9)

    def test_wulff_shape_area_is_kappa_scaling(self, euclid3, power4, ellipsoid_norm):
        for n in (euclid3, power4, ellipsoid_norm):
            k = kappa(n, (48, 96))
            for r in (0.5, 1.0, 2.0):
                a = anisotropic_area(StarDomain.wulff(n, r), n, resolution=(48, 96))
                assert a == pytest.approx(k * r**2, rel=5e-3)

    def test_ellipsoid_norm_on_ball_against_refinement(self, ellipsoid_norm):
        d = StarDomain.ball(1.0)
        coarse = anisotropic_area(d, ellipsoid_norm, resolution=(24, 48))
        fine = anisotropic_area(d, ellipsoid_norm, resolution=(96, 192))
        assert coarse == pytest.approx(fine, rel=2e-3)

    def test_convergence_order_under_refinement(self, ellipsoid_norm):
        d = StarDomain.ellipsoid([1.0, 1.3, 2.1])
        ref_a = anisotropic_area(d, ellipsoid_norm, resolution=(128, 256))
        ref_v = volume(d, (128, 256))
        errs_a, errs_v = [], []
        for res in ((8, 16), (16, 32)):
            errs_a.append(abs(anisotropic_area(d, ellipsoid_norm, resolution=res) - ref_a))
            errs_v.append(abs(volume(d, res) - ref_v))
        order_a = np.log2(errs_a[0] / max(errs_a[1], 1e-15))
        order_v = np.log2(errs_v[0] / max(errs_v[1], 1e-15))
        assert order_a >= 2.0
        assert order_v >= 2.0


class TestCurvature:
    def test_euclidean_sphere(self, euclid3):
        d = StarDomain.ball(2.0)
        quad = boundary_quadrature(d, (8, 16))
        h = mean_curvature_samples(quad, euclid3)
        np.testing.assert_allclose(h, 1.0, rtol=1e-10)
        assert anisotropic_mean_curvature(d, euclid3, quad[0]) == pytest.approx(1.0)

    def test_wulff_shape_constant_curvature(self, power4, ellipsoid_norm):
        for n, r in ((power4, 1.0), (ellipsoid_norm, 2.0), (power4, 0.5)):
            quad = boundary_quadrature(StarDomain.wulff(n, r), (16, 32))
            h = mean_curvature_samples(quad, n)
            np.testing.assert_allclose(h, 2.0 / r, atol=1e-4 * 2.0 / r)

    def test_ellipsoid_pole_closed_form(self, euclid3):
        # semi-axes (1,1,2): both principal curvatures at the pole are c/a^2
        d = StarDomain.ellipsoid([1.0, 1.0, 2.0])
        pole = np.array([0.0, 0.0, 2.0])
        m = euclid3.hessian(d.gauge.gradient(pole)) @ d.gauge.hessian(pole)
        h = float(np.trace(m))
        assert h == pytest.approx(2 * 2.0 / 1.0**2, rel=1e-12)
        assert h == pytest.approx(ellipsoid_mean_curvature([1, 1, 2], pole), rel=1e-12)
        assert h == pytest.approx(fd_normal_variation_mean_curvature(d, pole), abs=1e-6)

    def test_ellipsoid_samples_match_classical_curvature(self, euclid3):
        d = StarDomain.ellipsoid([1.0, 1.0, 2.0])
        quad = boundary_quadrature(d, (8, 16))
        h = mean_curvature_samples(quad, euclid3)
        ref = [ellipsoid_mean_curvature([1, 1, 2], p) for p in quad.points]
        np.testing.assert_allclose(h, ref, rtol=1e-10)
        fd = [fd_normal_variation_mean_curvature(d, p) for p in quad.points[:5]]
        np.testing.assert_allclose(h[:5], fd, atol=1e-6)


class TestPinch:
    def test_zero_on_wulff_shapes(self, euclid3, power4):
        for n in (euclid3, power4):
            quad = boundary_quadrature(StarDomain.wulff(n, 1.0), (16, 32))
            np.testing.assert_allclose(pinch_samples(quad, n), 0.0, atol=1e-6)

    def test_zero_on_sphere(self, euclid3):
        d = StarDomain.ball(1.5)
        quad = boundary_quadrature(d, (8, 16))
        assert anisotropic_pinch(d, euclid3, quad[0]) == pytest.approx(0.0, abs=1e-12)

    def test_ellipsoid_equator_closed_form(self, euclid3):
        # at an equator point of (1,1,2) the curvatures are 1/a and a/c^2,
        # so the pinch is (k1 - k2)^2 / 2 in dimension 3
        d = StarDomain.ellipsoid([1.0, 1.0, 2.0])
        pt = np.array([1.0, 0.0, 0.0])
        m = euclid3.hessian(d.gauge.gradient(pt)) @ d.gauge.hessian(pt)
        s1 = np.trace(m)
        s2 = 0.5 * (s1**2 - np.trace(m @ m))
        pinch = 0.5 * s1**2 - 2 * s2
        k1, k2 = 1.0, 1.0 / 4.0
        assert pinch == pytest.approx(0.5 * (k1 - k2) ** 2, rel=1e-10)

    def test_nonnegative_on_convex_domains(self, euclid3, power4):
        domains = [StarDomain.ellipsoid([1.0, 1.1, 1.7]),
                   StarDomain.wulff(power4, 1.0),
                   StarDomain.ball(0.7)]
        for d in domains:
            quad = boundary_quadrature(d, (16, 32))
            for n in (euclid3, power4):
                assert pinch_samples(quad, n).min() > -1e-6


class TestWulffInequality:
    def test_all_domains_respect_wulff_inequality(self, euclid3, power4, ellipsoid_norm):
        domains = [StarDomain.ball(1.0), StarDomain.ellipsoid([1.0, 1.0, 3.0]),
                   StarDomain.wulff(power4, 1.0),
                   StarDomain.perturbed_wulff(euclid3, 1.0, 0.1, 2)]
        for n in (euclid3, power4, ellipsoid_norm):
            w = wulff_volume(n, (48, 96))
            for d in domains:
                lhs = anisotropic_area(d, n, resolution=(48, 96))
                rhs = 3 * w ** (1 / 3) * volume(d, (48, 96)) ** (2 / 3)
                assert lhs >= rhs * (1 - 0.01)

    def test_equality_for_wulff_radial(self, power4, ellipsoid_norm):
        for n in (power4, ellipsoid_norm):
            w = wulff_volume(n, (48, 96))
            d = StarDomain.wulff(n, 1.3)
            lhs = anisotropic_area(d, n, resolution=(48, 96))
            rhs = 3 * w ** (1 / 3) * volume(d, (48, 96)) ** (2 / 3)
            assert lhs == pytest.approx(rhs, rel=0.01)


class TestConvexity:
    def test_convex_cases(self, power4):
        assert is_convex(StarDomain.ball(1.0))
        assert is_convex(StarDomain.ellipsoid([1.0, 1.0, 3.0]))
        assert is_convex(StarDomain.wulff(power4, 1.0))

    def test_nonconvex_case(self, euclid3):
        d = StarDomain.perturbed_wulff(euclid3, 1.0, 0.45, 4)
        assert not is_convex(d)


class TestPerturbedWulff:
    def test_profile_bounds(self, euclid3):
        d = StarDomain.perturbed_wulff(euclid3, 1.0, 0.1, 2)
        grid_rho = d.radial_profile(boundary_quadrature(d, (16, 32)).angular.nodes)
        assert grid_rho.min() > 0.94 and grid_rho.max() < 1.11

    def test_gauge_derivatives_match_fd(self, power4):
        d = StarDomain.perturbed_wulff(power4, 1.0, 0.1, 3)
        x = np.array([0.7, -0.4, 0.6])
        g = d.gauge.gradient(x)
        h = d.gauge.hessian(x)
        eps = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = eps
            fd = (d.gauge.value(x + e) - d.gauge.value(x - e)) / (2 * eps)
            assert g[i] == pytest.approx(fd, abs=1e-8)
            fdh = (d.gauge.gradient(x + e) - d.gauge.gradient(x - e)) / (2 * eps)
            np.testing.assert_allclose(h[i], fdh, atol=1e-6)

    def test_2d_bump(self):
        n2 = make_norm(NormSpec.euclidean(2))
        d = StarDomain.perturbed_wulff(n2, 1.0, 0.1, 3)
        x = np.array([0.8, 0.5])
        g = d.gauge.gradient(x)
        eps = 1e-7
        for i in range(2):
            e = np.zeros(2)
            e[i] = eps
            fd = (d.gauge.value(x + e) - d.gauge.value(x - e)) / (2 * eps)
            assert g[i] == pytest.approx(fd, abs=1e-7)

    def test_amplitude_guard(self, euclid3):
        with pytest.raises(DomainError):
            StarDomain.perturbed_wulff(euclid3, 1.0, 0.6, 2)
