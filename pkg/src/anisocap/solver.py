"""Exterior anisotropic p-Laplace solver on a truncated annulus.

The capacitary potential of a star-shaped domain is the minimiser of the
convex energy  int F^p(grad u) dx  over the annulus between the boundary
and an outer sphere of radius r_out, with u = 1 on the inner boundary.
The discrete energy is

    E(u) = sum_cells W_c (F^2(grad u|_c) + delta^2)^(p/2)

on a structured grid: shared radial coordinates s in [0, 1] mapped onto
each ray by r = rho(theta) + s (r_out - rho(theta)), tensored with the
angular quadrature grid.  Radial nodes are clustered geometrically so the
power-law decay is resolved uniformly in log r.  Gradients are
reconstructed at radial midpoints: exact radial differences plus spectral
angular derivatives averaged from the two neighbouring layers, rotated to
Cartesian components through the closed-form coordinate gradients.

The outer boundary stays free and the energy carries the analytic tail of
the exterior beyond r_out: continuing boundary values g(theta) by the
far-field pattern g * (F*(x)/F*(r_out theta))^(-alpha), alpha=(n-p)/(p-1),
costs

    sum_j w_j alpha^(p-1) r_out^(n-p) F*(theta_j)^(-p) |g_j|^p.

Its stationarity condition is the decay-matched Robin relation
du/dr = -alpha u/r_out in weak form, exact for every field proportional
to F*(x)^(-alpha); this removes the leading truncation bias of a
Dirichlet cutoff and makes the minimum approximate the full exterior
energy, i.e. the capacity itself.

Minimisation is preconditioned nonlinear conjugate gradient with Armijo
backtracking; the regularisation delta is driven down by continuation so
the integrand stays uniformly convex for p < 2 at every stage.  Cells
where the reconstructed gradient vanishes are handled solely through the
regularised energy (their stress is zero for p > 1).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .domains import StarDomain, SurfaceQuadrature, boundary_quadrature
from .norms import NormEvaluator
from .quadrature import AngularGrid, build_angular_grid


class SolverError(ValueError):
    """Invalid solver configuration or request."""


def decay_exponent(n: int, p: float) -> float:
    """Far-field power (n-p)/(p-1) of the capacitary potential."""
    return (n - p) / (p - 1.0)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

class AnnularGrid:
    """Structured annulus between a star-shaped boundary and an outer sphere.

    ``u`` fields live on nodes (n_radial, M); cell quantities live on
    radial midpoints (n_radial - 1, M).
    """

    def __init__(self, domain: StarDomain, angular: AngularGrid, r_out: float,
                 n_radial: int):
        if n_radial < 8:
            raise SolverError("need at least 8 radial layers")
        theta = angular.nodes
        rho = domain.radial_profile(theta)
        if r_out <= 2.0 * rho.max():
            raise SolverError(
                f"r_out={r_out:g} too small: must exceed twice the maximal "
                f"radius {rho.max():g}")
        self.domain = domain
        self.angular = angular
        self.dim = domain.dim
        self.r_out = float(r_out)
        self.n_radial = int(n_radial)
        self.rho = rho

        # geometric clustering for the reference ray, shared s-coordinates
        rho_ref = float(np.exp(np.mean(np.log(rho))))
        lam = np.log(r_out / rho_ref)
        t = np.linspace(0.0, 1.0, n_radial)
        self.s = (np.exp(lam * t) - 1.0) / (np.exp(lam) - 1.0)
        self.r = rho[None, :] + self.s[:, None] * (r_out - rho)[None, :]

        # midpoint geometry
        self.ds = np.diff(self.s)
        s_mid = 0.5 * (self.s[:-1] + self.s[1:])
        r_mid = rho[None, :] + s_mid[:, None] * (r_out - rho)[None, :]
        self.r_mid = r_mid

        # gradient of the 0-homogeneous radial profile extension at theta
        g_gauge = domain.gauge.gradient(theta)
        grad_rho = rho[:, None] * theta - (rho**2)[:, None] * g_gauge

        span = (r_out - rho)[None, :, None]
        self.grad_s = (theta[None, :, :]
                       - (1.0 - s_mid)[:, None, None] * grad_rho[None, :, :]) / span
        if self.dim == 3:
            self.grad_mu = angular.tangent_mu[None, :, :] / r_mid[:, :, None]
        else:
            self.grad_mu = None
        self.grad_phi = angular.tangent_phi[None, :, :] / r_mid[:, :, None]

        dr_ds = (r_out - rho)[None, :]
        self.cell_weights = (angular.weights[None, :]
                             * r_mid ** (self.dim - 1) * dr_ds * self.ds[:, None])
        self.robin_log_ratio = np.log(self.r[-1] / self.r[-2])
        self.boundary = SurfaceQuadrature(domain, angular)

    @property
    def node_count(self) -> int:
        return self.n_radial * self.angular.size

    def nodes(self) -> np.ndarray:
        """Cartesian node positions, shape (n_radial, M, dim)."""
        return self.r[:, :, None] * self.angular.nodes[None, :, :]

    def coordinate_gradients_at(self, s: np.ndarray) -> tuple:
        """(grad s, grad mu, grad phi) at per-ray radial coordinates s."""
        theta = self.angular.nodes
        rho = self.rho
        r = rho + s * (self.r_out - rho)
        g_gauge = self.domain.gauge.gradient(theta)
        grad_rho = rho[:, None] * theta - (rho**2)[:, None] * g_gauge
        gs = (theta - (1.0 - s)[:, None] * grad_rho) / (self.r_out - rho)[:, None]
        gphi = self.angular.tangent_phi / r[:, None]
        if self.dim == 3:
            gmu = self.angular.tangent_mu / r[:, None]
            return gs, gmu, gphi
        return gs, None, gphi

    def robin_ratio(self, p: float) -> np.ndarray:
        return np.exp(-decay_exponent(self.dim, p) * self.robin_log_ratio)


def build_annulus(domain: StarDomain, norm: NormEvaluator | None, r_out: float,
                  resolution) -> AnnularGrid:
    """Grid between the domain boundary and the sphere of radius r_out.

    ``resolution`` is (n_radial, n_polar, n_azimuth) in dimension 3 and
    (n_radial, n_azimuth) in dimension 2.  The angular part coincides with
    the boundary quadrature grid of the domains module.
    """
    if domain.dim == 3:
        n_radial, n_polar, n_azimuth = resolution
        angular = build_angular_grid(3, n_polar, n_azimuth)
    else:
        n_radial, n_azimuth = resolution
        angular = build_angular_grid(2, n_azimuth=n_azimuth)
    return AnnularGrid(domain, angular, r_out, n_radial)


# ---------------------------------------------------------------------------
# discrete energy
# ---------------------------------------------------------------------------

class _DiscreteEnergy:
    """E(u) = sum W (F^2(Bu) + delta^2)^(p/2) + exterior tail term."""

    def __init__(self, grid: AnnularGrid, norm: NormEvaluator, p: float):
        self.grid = grid
        self.norm = norm
        self.p = float(p)
        alpha = decay_exponent(grid.dim, p)
        fo = norm.dual_value(grid.angular.nodes)
        self.tail_coef = (grid.angular.weights * alpha ** (p - 1.0)
                          * grid.r_out ** (grid.dim - p) * fo ** (-p))

    # -- linear reconstruction ---------------------------------------------

    def expand(self, u_int: np.ndarray) -> np.ndarray:
        """Full nodal field from the unknowns (all layers except Dirichlet)."""
        g = self.grid
        full = np.empty((g.n_radial, g.angular.size))
        full[0] = 1.0
        full[1:] = u_int
        return full

    def reconstruct(self, full: np.ndarray) -> np.ndarray:
        """Cartesian gradients at the radial midpoints, (Nc, M, dim)."""
        g = self.grid
        u_s = (full[1:] - full[:-1]) / g.ds[:, None]
        derivs = g.angular.differentiate(full)
        out = u_s[:, :, None] * g.grad_s
        if g.dim == 3:
            dmu, dphi = derivs
            out = out + 0.5 * (dmu[:-1] + dmu[1:])[:, :, None] * g.grad_mu
        else:
            (dphi,) = derivs
        out = out + 0.5 * (dphi[:-1] + dphi[1:])[:, :, None] * g.grad_phi
        return out

    def reconstruct_adjoint(self, cot: np.ndarray) -> np.ndarray:
        """Adjoint of expand+reconstruct, returning unknown-shaped array."""
        g = self.grid
        t_s = np.einsum("cmi,cmi->cm", cot, g.grad_s) / g.ds[:, None]
        full = np.zeros((g.n_radial, g.angular.size))
        full[:-1] -= t_s
        full[1:] += t_s

        t_phi = np.einsum("cmi,cmi->cm", cot, g.grad_phi)
        lay_phi = np.zeros_like(full)
        lay_phi[:-1] += 0.5 * t_phi
        lay_phi[1:] += 0.5 * t_phi
        if g.dim == 3:
            t_mu = np.einsum("cmi,cmi->cm", cot, g.grad_mu)
            lay_mu = np.zeros_like(full)
            lay_mu[:-1] += 0.5 * t_mu
            lay_mu[1:] += 0.5 * t_mu
            full += g.angular.differentiate_adjoint(lay_mu, lay_phi)
        else:
            full += g.angular.differentiate_adjoint(lay_phi)
        return full[1:].copy()

    # -- energy and stress ----------------------------------------------------

    def _f_and_stress(self, grads: np.ndarray, delta: float):
        flat = grads.reshape(-1, self.grid.dim)
        fnorm = np.zeros(flat.shape[0])
        stress = np.zeros_like(flat)
        nz = np.any(flat != 0.0, axis=1)
        fv = self.norm.value(flat[nz])
        fnorm[nz] = fv
        coef = self.p * (fv**2 + delta**2) ** (0.5 * self.p - 1.0) * fv
        stress[nz] = coef[:, None] * self.norm.gradient(flat[nz])
        shape = grads.shape[:-1]
        return fnorm.reshape(shape), stress.reshape(grads.shape)

    def tail_energy(self, outer: np.ndarray) -> float:
        return float(np.sum(self.tail_coef * np.abs(outer) ** self.p))

    def energy(self, u_int: np.ndarray, delta: float) -> float:
        grads = self.reconstruct(self.expand(u_int))
        flat = grads.reshape(-1, self.grid.dim)
        f2 = np.zeros(flat.shape[0])
        nz = np.any(flat != 0.0, axis=1)
        f2[nz] = self.norm.value(flat[nz]) ** 2
        dens = (f2.reshape(grads.shape[:-1]) + delta**2) ** (0.5 * self.p)
        return float(np.sum(self.grid.cell_weights * dens)) + self.tail_energy(u_int[-1])

    def energy_and_gradient(self, u_int: np.ndarray, delta: float):
        grads = self.reconstruct(self.expand(u_int))
        fnorm, stress = self._f_and_stress(grads, delta)
        dens = (fnorm**2 + delta**2) ** (0.5 * self.p)
        e = float(np.sum(self.grid.cell_weights * dens)) + self.tail_energy(u_int[-1])
        cot = self.grid.cell_weights[:, :, None] * stress
        grad = self.reconstruct_adjoint(cot)
        outer = u_int[-1]
        grad[-1] += (self.p * self.tail_coef * np.abs(outer) ** (self.p - 1.0)
                     * np.sign(outer))
        return e, grad

    def gradient_scale(self, u_int: np.ndarray, delta: float) -> float:
        """Magnitude reference for gradient norms: radial-part assembly with
        all cancellations suppressed."""
        grads = self.reconstruct(self.expand(u_int))
        fnorm, _ = self._f_and_stress(grads, delta)
        mag = (self.p * (fnorm**2 + delta**2) ** (0.5 * self.p - 0.5)
               * np.linalg.norm(self.grid.grad_s, axis=-1))
        t_s = self.grid.cell_weights * mag / self.grid.ds[:, None]
        acc = np.zeros((self.grid.n_radial, self.grid.angular.size))
        acc[:-1] += t_s
        acc[1:] += t_s
        return float(np.linalg.norm(acc[1:]))


# ---------------------------------------------------------------------------
# potential field
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    """Continuation, tolerance, and iteration controls for the minimiser."""

    delta0_rel: float = 1e-2
    delta_factor: float = 0.1
    delta_final_rel: float = 1e-6
    max_iter: int = 1500
    tol_grad: float = 1e-9
    tol_energy: float = 1e-13
    ls_max: int = 30
    verbose: bool = False

    def __post_init__(self):
        if self.delta0_rel <= 0 or self.delta_final_rel <= 0:
            raise SolverError("regularisation levels must be positive")
        if self.tol_grad <= 0 or self.tol_energy <= 0:
            raise SolverError("tolerances must be positive")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    energy: float
    grad_norm: float
    grad_scale: float
    delta_trace: list
    max_principle_ok: bool
    ray_monotone: bool
    energy_increases: int
    wall_time: float
    message: str

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "grad_scale": self.grad_scale,
            "delta_trace": list(self.delta_trace),
            "max_principle_ok": self.max_principle_ok,
            "ray_monotone": self.ray_monotone,
            "energy_increases": self.energy_increases,
            "wall_time": self.wall_time,
            "message": self.message,
        }


class PotentialField:
    """Discrete capacitary potential with solve diagnostics."""

    def __init__(self, u: np.ndarray, norm: NormEvaluator, p: float,
                 grid: AnnularGrid, gamma_estimate: float | None,
                 report: SolveReport):
        self.u = u
        self.norm = norm
        self.p = float(p)
        self.grid = grid
        self.gamma_estimate = gamma_estimate
        self.report = report
        self._angular_layers = None

    def angular_derivative_layers(self) -> tuple:
        """Cached tangential-coordinate derivatives of u at every layer."""
        if self._angular_layers is None:
            self._angular_layers = self.grid.angular.differentiate(self.u)
        return self._angular_layers


def solve_potential(grid: AnnularGrid, norm: NormEvaluator, p: float,
                    config: SolverConfig | None = None) -> PotentialField:
    """Minimise the regularised p-energy on the annulus.

    Returns the discrete capacitary potential; the report flags loss of
    convergence, of the discrete maximum principle, and of monotone decay
    along rays.
    """
    if config is None:
        config = SolverConfig()
    n = grid.dim
    if not (1.0 < p < n):
        raise SolverError(f"capacitary exponent requires 1 < p < n, got p={p}")
    t0 = time.perf_counter()
    alpha = decay_exponent(n, p)
    energy = _DiscreteEnergy(grid, norm, p)

    # power-decay initial guess, exact for Wulff-radial equality cases
    u_full0 = (grid.r / grid.rho[None, :]) ** (-alpha)
    u_int = u_full0[1:].copy()

    # regularisation scale from the initial gradient magnitudes
    g0 = energy.reconstruct(energy.expand(u_int))
    f_typ = float(np.median(norm.value(g0.reshape(-1, n))))
    deltas = []
    d = config.delta0_rel * f_typ if p < 2.0 else config.delta_final_rel * f_typ
    while True:
        deltas.append(d)
        if d <= config.delta_final_rel * f_typ * (1.0 + 1e-12):
            break
        d = max(d * config.delta_factor, config.delta_final_rel * f_typ)

    precond = _probe_preconditioner(energy, u_int)
    total_iter = 0
    increases = 0
    converged = True
    message = "ok"
    scale = energy.gradient_scale(u_int, deltas[0])
    gnorm = np.inf
    e = np.inf
    for delta in deltas:
        e, grad = energy.energy_and_gradient(u_int, delta)
        z = grad / precond
        direction = -z
        gz = float(np.sum(grad * z))
        step = 1.0
        stage_iter = 0
        stagnant = 0
        while stage_iter < config.max_iter:
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= config.tol_grad * scale:
                break
            dphi0 = float(np.sum(grad * direction))
            if dphi0 >= 0.0:
                direction = -z
                dphi0 = -gz
            # Armijo backtracking; the energy is convex along the ray
            t = step
            e_new = energy.energy(u_int + t * direction, delta)
            ls = 0
            while e_new > e + 1e-4 * t * dphi0 and ls < config.ls_max:
                t *= 0.5
                e_new = energy.energy(u_int + t * direction, delta)
                ls += 1
            if ls >= config.ls_max:
                message = "line search failed"
                converged = False
                break
            if e_new > e:
                increases += 1
            u_int = u_int + t * direction
            step = min(t * 2.0, 4.0 * t + 1e-30) if ls == 0 else t * 1.5
            e_prev = e
            e, grad_new = energy.energy_and_gradient(u_int, delta)
            z_new = grad_new / precond
            gz_new = float(np.sum(grad_new * z_new))
            beta = max(0.0, float(np.sum(z_new * (grad_new - grad))) / gz)
            direction = -z_new + beta * direction
            grad, z, gz = grad_new, z_new, gz_new
            stage_iter += 1
            if abs(e_prev - e) <= config.tol_energy * max(abs(e), 1e-300):
                stagnant += 1
                if stagnant >= 5:
                    break
            else:
                stagnant = 0
        total_iter += stage_iter
        if stage_iter >= config.max_iter:
            converged = False
            message = "iteration cap reached"
        if not converged:
            break

    full = energy.expand(u_int)
    interior = full[1:-1]
    max_principle = bool(interior.min() > 0.0 and interior.max() < 1.0 + 1e-12)
    ray_monotone = bool(np.all(np.diff(full, axis=0) <= 1e-10))
    gamma = _fit_gamma(grid, norm, p, full)
    report = SolveReport(
        converged=converged, iterations=total_iter, energy=e,
        grad_norm=gnorm, grad_scale=scale, delta_trace=deltas,
        max_principle_ok=max_principle, ray_monotone=ray_monotone,
        energy_increases=increases, wall_time=time.perf_counter() - t0,
        message=message)
    return PotentialField(full, norm, p, grid, gamma, report)


def _probe_preconditioner(energy: _DiscreteEnergy, u0: np.ndarray,
                          probes: int = 12) -> np.ndarray:
    """Stochastic diagonal of the p=2 surrogate stiffness B^T W B plus the
    tail curvature at the initial guess."""
    g = energy.grid
    rng = np.random.default_rng(2024)
    shape = (g.n_radial - 1, g.angular.size)
    acc = np.zeros(shape)
    for _ in range(probes):
        z = rng.choice([-1.0, 1.0], size=shape)
        grads = energy.reconstruct(_expand_hom(energy, z))
        cot = g.cell_weights[:, :, None] * grads
        acc += z * energy.reconstruct_adjoint(cot)
    diag = acc / probes
    p = energy.p
    diag[-1] += p * max(p - 1.0, 1.0) * energy.tail_coef * u0[-1] ** (p - 2.0)
    floor = max(np.median(diag[diag > 0]) * 1e-3, 1e-300)
    return np.maximum(diag, floor)


def _expand_hom(energy: _DiscreteEnergy, u_int: np.ndarray) -> np.ndarray:
    """Homogeneous expansion (zero Dirichlet data) used by linear probes."""
    g = energy.grid
    full = np.empty((g.n_radial, g.angular.size))
    full[0] = 0.0
    full[1:] = u_int
    return full


def _fit_gamma(grid: AnnularGrid, norm: NormEvaluator, p: float,
               full: np.ndarray) -> float:
    """Asymptotic strength of the field against the fundamental profile.

    Fits u ~ beta F*(x)^(-alpha) on the penultimate layer and converts to
    the capacity-normalised constant gamma = Cap^(1/(p-1)).
    """
    from .wulff import kappa as kappa_fn

    alpha = decay_exponent(grid.dim, p)
    x = grid.r[-2, :, None] * grid.angular.nodes
    fo = norm.dual_value(x)
    w = grid.angular.weights
    beta = float(np.sum(w * full[-2] * fo**alpha) / np.sum(w))
    k = kappa_fn(norm, grid.angular)
    return beta * ((grid.dim - p) / (p - 1.0)) * k ** (1.0 / (p - 1.0))


# ---------------------------------------------------------------------------
# analytic reference potential
# ---------------------------------------------------------------------------

def analytic_wulff_potential(norm: NormEvaluator, p: float, radius: float, x) -> np.ndarray:
    """Exact capacitary potential of the Wulff ball of the given radius:
    u(x) = (F*(x)/R)^(-(n-p)/(p-1)), defined for F*(x) >= R."""
    if not (1.0 < p < norm.dim):
        raise SolverError(f"requires 1 < p < n, got p={p}")
    fo = norm.dual_value(x)
    if np.any(fo < radius * (1.0 - 1e-12)):
        raise SolverError("point lies inside the Wulff ball")
    return (fo / radius) ** (-decay_exponent(norm.dim, p))


def field_from_function(grid: AnnularGrid, norm: NormEvaluator, p: float,
                        fn) -> PotentialField:
    """Sample a callable u(x) on the grid nodes as a PotentialField."""
    vals = fn(grid.nodes().reshape(-1, grid.dim)).reshape(grid.n_radial, -1)
    report = SolveReport(converged=True, iterations=0, energy=np.nan,
                         grad_norm=np.nan, grad_scale=np.nan, delta_trace=[],
                         max_principle_ok=True, ray_monotone=True,
                         energy_increases=0, wall_time=0.0, message="sampled")
    return PotentialField(vals, norm, p, grid, None, report)


def pde_residual(field: PotentialField, norm: NormEvaluator | None = None,
                 p: float | None = None) -> float:
    """Relative weak-form residual against interior nodal test functions.

    Assembles the unregularised stress divergence tested with every
    interior node (layers 1..N-2, no outer closure), normalised by the
    cancellation-free assembly of the same integrand magnitudes.
    """
    norm = norm or field.norm
    p = p or field.p
    energy = _DiscreteEnergy(field.grid, norm, p)
    grads = energy.reconstruct(field.u)
    _, stress = energy._f_and_stress(grads, 0.0)
    cot = field.grid.cell_weights[:, :, None] * stress
    resid = energy.reconstruct_adjoint(cot)[:-1]
    scale = energy.gradient_scale(field.u[1:], 0.0)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(resid) / scale)


# ---------------------------------------------------------------------------
# field dump
# ---------------------------------------------------------------------------

_DUMP_MAGIC = b"APCF"


def dump_field(field: PotentialField, path) -> None:
    """Binary nodal dump: magic 'APCF', uint32 version, uint32 dims
    (dim, n_radial, n_polar, n_azimuth), then the nodal values as
    row-major float64 (radial-major, angular within a layer)."""
    g = field.grid
    header = np.array([1, g.dim, g.n_radial, g.angular.n_polar,
                       g.angular.n_azimuth], dtype=np.uint32)
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(field.u, dtype=np.float64).tobytes())


def load_field_values(path) -> np.ndarray:
    """Read back a dump written by :func:`dump_field` (values only)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DUMP_MAGIC:
            raise SolverError("not a field dump")
        header = np.frombuffer(fh.read(5 * 4), dtype=np.uint32)
        _, dim, n_radial, n_polar, n_azimuth = (int(v) for v in header)
        m = n_azimuth if dim == 2 else n_polar * n_azimuth
        vals = np.frombuffer(fh.read(8 * n_radial * m), dtype=np.float64)
    return vals.reshape(n_radial, m).copy()


# ---------------------------------------------------------------------------
# ray interpolation (shared with the functionals module)
# ---------------------------------------------------------------------------

class RayInterpolator:
    """Degree-4 local polynomial interpolation of a field along rays.

    Windows of five consecutive radial nodes give smooth O(h^4) values and
    derivatives anywhere in s, including one-sided evaluation at the inner
    boundary.  Level-set crossings are found per ray by bisection-guarded
    Newton on the local interpolant.
    """

    WINDOW = 5

    def __init__(self, field: PotentialField):
        self.field = field
        self.grid = field.grid
        self.s = self.grid.s
        derivs = field.angular_derivative_layers()
        self.layer_data = (field.u,) + tuple(derivs)

    def _window_start(self, cell_index: np.ndarray) -> np.ndarray:
        k = cell_index - (self.WINDOW - 1) // 2
        return np.clip(k, 0, self.grid.n_radial - self.WINDOW)

    def _newton_coeffs(self, starts: np.ndarray, data: np.ndarray):
        """Divided-difference tables for per-ray windows of nodal data."""
        idx = starts[None, :] + np.arange(self.WINDOW)[:, None]      # (W, M)
        sloc = self.s[idx]                                           # (W, M)
        table = data[idx, np.arange(data.shape[1])[None, :]].copy()
        coeffs = [table[0].copy()]
        for order in range(1, self.WINDOW):
            table = ((table[1:] - table[:-1])
                     / (sloc[order:] - sloc[:-order]))
            coeffs.append(table[0].copy())
        return np.stack(coeffs), sloc

    @staticmethod
    def _horner(coeffs: np.ndarray, sloc: np.ndarray, at: np.ndarray):
        """Newton-form evaluation with first derivative."""
        w = coeffs.shape[0]
        val = coeffs[w - 1].copy()
        der = np.zeros_like(val)
        for k in range(w - 2, -1, -1):
            dx = at - sloc[k]
            der = der * dx + val
            val = val * dx + coeffs[k]
        return val, der

    def values_at(self, s_at: np.ndarray, which: int = 0):
        """Interpolated layer-data values/derivatives at per-ray s."""
        cell = np.clip(np.searchsorted(self.s, s_at, side="right") - 1,
                       0, self.grid.n_radial - 2)
        starts = self._window_start(cell)
        coeffs, sloc = self._newton_coeffs(starts, self.layer_data[which])
        return self._horner(coeffs, sloc, s_at)

    def level_crossings(self, level: float):
        """Per-ray radial coordinates where u equals ``level``.

        Requires the level to be crossed strictly inside every ray, except
        level = 1 which maps to the inner boundary (s = 0).
        """
        u = self.field.u
        if level >= 1.0 - 1e-13:
            return np.zeros(u.shape[1])
        above = (u > level).sum(axis=0)
        if np.any(above == 0) or np.any(above >= u.shape[0]):
            raise SolverError(f"level {level:g} leaves the annulus")
        cell = above - 1
        starts = self._window_start(cell)
        coeffs, sloc = self._newton_coeffs(starts, u)
        lo = self.s[cell]
        hi = self.s[cell + 1]
        s_at = 0.5 * (lo + hi)
        for _ in range(60):
            val, der = self._horner(coeffs, sloc, s_at)
            resid = val - level
            hi = np.where(resid < 0.0, s_at, hi)
            lo = np.where(resid >= 0.0, s_at, lo)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = s_at - resid / der
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            s_new = np.where(bad, 0.5 * (lo + hi), newton)
            if np.max(np.abs(s_new - s_at)) < 1e-15:
                s_at = s_new
                break
            s_at = s_new
        return s_at

    def gradient_at(self, s_at: np.ndarray) -> np.ndarray:
        """Cartesian gradient of u at per-ray radial coordinates."""
        g = self.grid
        _, u_s = self.values_at(s_at, which=0)
        gs, gmu, gphi = g.coordinate_gradients_at(s_at)
        out = u_s[:, None] * gs
        if g.dim == 3:
            u_mu, _ = self.values_at(s_at, which=1)
            u_phi, _ = self.values_at(s_at, which=2)
            out = out + u_mu[:, None] * gmu + u_phi[:, None] * gphi
        else:
            u_phi, _ = self.values_at(s_at, which=1)
            out = out + u_phi[:, None] * gphi
        return out
