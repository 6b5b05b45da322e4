"""Fourier-Galerkin approximation on bands ``(n, n, 2n)``.

The theta equation carries the operator ``T_n(K) = J_eq + P_n o K`` in front
of the time derivative; it is inverted by preconditioned conjugate gradient.
Time stepping is classical RK4 or an integrating-factor RK4 (Lawson) that
treats the constant-coefficient linearisation about equilibrium exactly,
mode by mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import kernels
from .core import (
    Engine,
    PhysParams,
    State,
    Tangent,
    _curl,
    default_size,
    get_engine,
    sym_from6,
    sym_to6,
    ten,
)
from .errors import BandError, BlowUpError, ConfigurationError, NumericalError
from .fields import (
    Grid,
    SpectralField,
    coeffs_to_physical,
    hermitian_part,
    hs_norm_sq_coeffs,
    leray_coeffs,
    physical_to_coeffs,
    random_field,
)

STEPPERS = ("rk4", "if-rk4")


@dataclass(frozen=True)
class GalerkinConfig:
    """Bands, stepping and tolerance knobs for a Galerkin run."""

    n: int
    dt: float
    t_end: float
    stepper: str = "if-rk4"
    snapshot_every: int = 1
    phys_size: int | None = None
    band_norm: str = "linf"
    cg_tol: float = 1e-10
    cg_maxiter: int = 200
    blowup_sigma: float = 1.0e4
    enforce_constraints: bool = True

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigurationError("n must be >= 1")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be non-negative")
        if self.stepper not in STEPPERS:
            raise ConfigurationError(f"stepper must be one of {STEPPERS}")
        if int(self.snapshot_every) < 1:
            raise ConfigurationError("snapshot_every must be >= 1")
        if self.phys_size is not None and self.phys_size < 5 * self.n + 1:
            raise ConfigurationError(
                f"phys_size={self.phys_size} violates the dealiasing rule (need >= {5 * self.n + 1})")

    @property
    def N(self):
        return self.phys_size or default_size(self.n)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def engine(self, params):
        eng = get_engine(self.n, params, self.N, self.band_norm)
        eng.cg_tol, eng.cg_maxiter = self.cg_tol, self.cg_maxiter
        return eng


# ---------------------------------------------------------------------------
# T_n(K)


@dataclass(frozen=True, eq=False)
class TnOperator:
    """``v -> J_eq v + P_n(K v)`` on band-``n`` vector fields."""

    K: SpectralField
    n: int
    params: PhysParams

    def __post_init__(self):
        if self.K.rank != "sym":
            raise ConfigurationError("TnOperator needs a symmetric K")
        if self.K.grid.n_modes != 2 * self.n:
            raise BandError("K must live on band 2n")

    @property
    def engine(self):
        return get_engine(self.n, self.params, self.K.grid.phys_size, self.K.grid.norm)

    def K_physical(self):
        return self.engine.phys_sym(self.K.coeffs)

    def _check(self, v):
        g = self.engine.grid_n
        if v.rank != "vector" or v.grid != g:
            raise BandError(f"expected a band-{self.n} vector field on {g}")


def apply_Tn(op, v):
    op._check(v)
    eng = op.engine
    return v.with_coeffs(eng.apply_T(op.K_physical(), v.coeffs))


def invert_Tn(op, f, tol=1e-10, maxiter=200):
    """Solve ``T_n(K) v = f`` by Jacobi-preconditioned CG."""
    op._check(f)
    eng = op.engine
    return f.with_coeffs(eng.solve_T(op.K_physical(), f.coeffs, tol=tol, maxiter=maxiter))


# ---------------------------------------------------------------------------
# Right-hand side


def _check_bands(Z):
    if Z.u.grid.n_modes * 2 != Z.K.grid.n_modes:
        raise BandError("state is not on bands (n, n, 2n)")


def galerkin_derivatives(Z, params, j_max=1, engine=None):
    """``[dZ, ..., d^j_max Z]`` of the Galerkin system as coefficient triples."""
    _check_bands(Z)
    eng = engine or get_engine(Z.n, params, Z.grid_n.phys_size, Z.grid_n.norm)
    return eng.derivatives(*Z.arrays(), j_max=j_max, mode="galerkin")[1:]


def approximate_rhs(Z, params, engine=None):
    (du, dth, dK), = galerkin_derivatives(Z, params, 1, engine)
    return Tangent(SpectralField(Z.grid_n, "vector", du),
                   SpectralField(Z.grid_n, "vector", dth),
                   SpectralField(Z.grid_2n, "sym", dK))


def galerkin_tangents(Z, params, j_max=2, engine=None):
    out = galerkin_derivatives(Z, params, j_max, engine)
    return [Tangent(SpectralField(Z.grid_n, "vector", a), SpectralField(Z.grid_n, "vector", b),
                    SpectralField(Z.grid_2n, "sym", c)) for a, b, c in out]


# ---------------------------------------------------------------------------
# Linear propagator


def linear_matrices(k, params):
    """Linearisation about equilibrium at wavenumbers ``k`` (shape ``(..., 3)``).

    Returns complex ``(..., 12, 12)`` matrices acting on
    ``(u_hat, theta_hat, K6_hat)`` where ``K6`` lists the entries
    ``11, 12, 13, 22, 23, 33`` of the symmetric ``K``.
    """
    p = params
    k = np.asarray(k, dtype=float)
    lead = k.shape[:-1]
    L = np.zeros(lead + (12, 12), dtype=complex)
    k2 = np.sum(k * k, axis=-1)
    ik = 1j * k
    Jd = p.J_diag
    weq = p.omega_eq
    Jw = p.J_eq @ weq
    basis = np.eye(12)
    for col in range(12):
        e = basis[col]
        u, th, K6 = e[:3], e[3:6], e[6:]
        K = sym_from6(K6.reshape(6, 1))[..., 0]
        a = K[:2, 2]
        # velocity
        curl_th = np.cross(ik, np.broadcast_to(th, ik.shape))
        du = -(p.mu + 0.5 * p.kappa) * k2[..., None] * u + p.kappa * curl_th
        # angular velocity
        curl_u = np.cross(ik, np.broadcast_to(u, ik.shape))
        kth = np.sum(k * th, axis=-1)
        rhs = (p.kappa * curl_u - 2.0 * p.kappa * th
               - (p.alpha_tilde - p.gamma_tilde) * k * kth[..., None]
               - p.gamma_tilde * k2[..., None] * th)
        rhs = rhs - np.cross(weq, p.J_eq @ th) - np.cross(th, Jw)
        rhs = rhs - p.tau_tilde ** 2 * np.array([-a[1], a[0], 0.0])
        dth = rhs / Jd
        # microinertia
        dK = (ten(th) @ p.J_eq - p.J_eq @ ten(th)) + (ten(weq) @ K - K @ ten(weq))
        dK6 = sym_to6(dK)
        L[..., 0:3, col] = du
        L[..., 3:6, col] = dth
        L[..., 6:12, col] = np.broadcast_to(dK6, lead + (6,))
    return L


def rotation_matrix6(params):
    """``K -> [Omega_eq, K]`` on the six symmetric entries."""
    weq = params.omega_eq
    W = ten(weq)
    M = np.zeros((6, 6))
    for col in range(6):
        e = np.zeros(6)
        e[col] = 1.0
        K = sym_from6(e.reshape(6, 1))[..., 0]
        M[:, col] = sym_to6(W @ K - K @ W)
    return M


class LinearPropagator:
    """Exact ``exp(h L)`` for the equilibrium linearisation, per Fourier mode."""

    def __init__(self, engine, params):
        self.eng, self.params = engine, params
        n = engine.n
        g = engine.grid_n
        kvec = np.moveaxis(g.wavenumbers, 0, -1).reshape(-1, 3)
        self.L = linear_matrices(kvec, params)
        # the mean of u is not a degree of freedom
        zero = np.all(kvec == 0, axis=1)
        self.L[zero, 0:3, :] = 0.0
        self.L[zero, :, 0:3] = 0.0
        self.R6 = rotation_matrix6(params)
        # box modes outside a Euclidean band only carry K
        out = ~engine.mask_n.reshape(-1).astype(bool)
        self.L[out] = 0.0
        self.L[out, 6:, 6:] = self.R6
        self.inner = slice(n, 3 * n + 1)
        self._cache = {}

    def expm(self, h):
        key = float(h)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = (sla.expm(h * self.L), sla.expm(h * self.R6))
        return self._cache[key]

    def apply(self, h, y):
        if h == 0:
            return y
        E, E6 = self.expm(h)
        u, th, K = y
        s = self.inner
        K6 = sym_to6(K)
        out6 = np.einsum("ij,j...->i...", E6, K6)
        inner6 = K6[:, s, s, s]
        vec = np.concatenate([u, th, inner6]).reshape(12, -1).T
        res = np.einsum("pij,pj->pi", E, vec).T.reshape((12,) + u.shape[1:])
        out6[:, s, s, s] = res[6:]
        return (res[:3], res[3:6], sym_from6(out6))

    def linear_part(self, y):
        u, th, K = y
        s = self.inner
        K6 = sym_to6(K)
        out6 = np.einsum("ij,j...->i...", self.R6, K6)
        vec = np.concatenate([u, th, K6[:, s, s, s]]).reshape(12, -1).T
        res = np.einsum("pij,pj->pi", self.L, vec).T.reshape((12,) + u.shape[1:])
        out6[:, s, s, s] = res[6:]
        return (res[:3], res[3:6], sym_from6(out6))


# ---------------------------------------------------------------------------
# Stepping


def _axpy(y, h, k):
    return tuple(a + h * b for a, b in zip(y, k))


def _lin(y, *pairs):
    out = list(y)
    for h, k in pairs:
        out = [a + h * b for a, b in zip(out, k)]
    return tuple(out)


def enforce_constraints(y, eng):
    u, th, K = y
    u = leray_coeffs(hermitian_part(u), eng.grid_n) * eng.mask_n
    n = eng.n
    u[:, n, n, n] = 0.0
    th = hermitian_part(th) * eng.mask_n
    K = hermitian_part(0.5 * (K + K.swapaxes(0, 1))) * eng.mask_2n
    return u, th, K


class Stepper:
    """Advances raw coefficient triples of the Galerkin system."""

    def __init__(self, params, cfg):
        self.params, self.cfg = params, cfg
        self.eng = cfg.engine(params)
        self.prop = LinearPropagator(self.eng, params) if cfg.stepper == "if-rk4" else None
        self.rhs_calls = 0

    def rhs(self, y):
        self.rhs_calls += 1
        return self.eng.derivatives(*y, j_max=1, mode="galerkin")[1]

    def nonlinear(self, y):
        f = self.rhs(y)
        lin = self.prop.linear_part(y)
        return tuple(a - b for a, b in zip(f, lin))

    def step(self, y, h):
        if self.cfg.stepper == "rk4":
            k1 = self.rhs(y)
            k2 = self.rhs(_axpy(y, h / 2, k1))
            k3 = self.rhs(_axpy(y, h / 2, k2))
            k4 = self.rhs(_axpy(y, h, k3))
            out = _lin(y, (h / 6, k1), (h / 3, k2), (h / 3, k3), (h / 6, k4))
        else:
            E = self.prop.apply
            n1 = self.nonlinear(y)
            a = E(h / 2, _axpy(y, h / 2, n1))
            n2 = self.nonlinear(a)
            yh = E(h / 2, y)
            b = _axpy(yh, h / 2, n2)
            n3 = self.nonlinear(b)
            c = _axpy(E(h, y), h, E(h / 2, n3))
            n4 = self.nonlinear(c)
            mid = E(h / 2, tuple(p + q for p, q in zip(n2, n3)))
            out = _lin(E(h, y), (h / 6, E(h, n1)), (h / 3, mid), (h / 6, n4))
        if self.cfg.enforce_constraints:
            out = enforce_constraints(out, self.eng)
        return out


def step(Z, params, cfg, stepper=None):
    """One time step of size ``cfg.dt``."""
    st = stepper or Stepper(params, cfg)
    y = st.step(Z.arrays(), cfg.dt)
    return State.from_arrays(*y, Z.grid_n, Z.grid_2n)


@dataclass
class Trajectory:
    """Snapshots of a Galerkin run (times and states)."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    params: PhysParams | None = None
    cfg: GalerkinConfig | None = None
    rhs_calls: int = 0

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.states))


def _h3_of_K(K, grid):
    return float(np.sqrt(hs_norm_sq_coeffs(K, grid, 3)))


def simulate(Z0, params, cfg, callback: Callable | None = None, keep=True):
    """Integrate from ``Z0`` to ``cfg.t_end`` recording every ``snapshot_every`` steps.

    ``callback(t, State)`` is invoked at each snapshot.  With ``keep=False``
    only the final snapshot is stored in the returned trajectory.
    """
    if Z0.n != cfg.n or Z0.grid_n.phys_size != cfg.N:
        raise ConfigurationError("initial state does not match the configured bands")
    st = Stepper(params, cfg)
    eng = st.eng
    traj = Trajectory(params=params, cfg=cfg)
    y = Z0.arrays()
    if cfg.enforce_constraints:
        y = enforce_constraints(y, eng)

    def record(i, y):
        t = i * cfg.dt
        Z = State.from_arrays(*y, Z0.grid_n, Z0.grid_2n)
        if keep or i == cfg.n_steps:
            traj.times.append(t)
            traj.states.append(Z)
        if callback is not None:
            callback(t, Z)

    record(0, y)
    for i in range(1, cfg.n_steps + 1):
        y = st.step(y, cfg.dt)
        if not all(np.all(np.isfinite(a)) for a in y):
            raise NumericalError(f"non-finite values at t={i * cfg.dt:g}")
        h3 = _h3_of_K(y[2], eng.grid_2n)
        if h3 > cfg.blowup_sigma:
            raise BlowUpError(
                f"||K||_H3 = {h3:.3e} exceeded sigma = {cfg.blowup_sigma:g} at t = {i * cfg.dt:g}",
                time=i * cfg.dt, value=h3)
        if i % cfg.snapshot_every == 0 or i == cfg.n_steps:
            record(i, y)
    traj.rhs_calls = st.rhs_calls
    return traj


# ---------------------------------------------------------------------------
# Initial data

INITIAL_KINDS = ("random-band", "single-mode", "tilt-axis")


def gaussian_envelope(width):
    return lambda kk: np.exp(-0.5 * (kk / width) ** 2)


def _unit_l2(f):
    nrm = np.sqrt(np.sum(np.abs(f.coeffs) ** 2))
    return f if nrm == 0 else f * (1.0 / nrm)


def microinertia_from_axis(nvec, params):
    """``nu n(x)n + lambda (I - n(x)n) - J_eq`` for a (normalised) axis field."""
    nn = np.einsum("i...,j...->ij...", nvec, nvec)
    I = np.eye(3).reshape((3, 3) + (1,) * (nvec.ndim - 1))
    return params.nu * nn + params.lam * (I - nn) - params.J_eq.reshape(I.shape)


@dataclass
class InitialDataReport:
    kind: str
    amplitude: float
    seed: int
    K_inf: float
    spectrum_deviation_pre: float
    spectrum_deviation_post: float


def initial_data(kind, amplitude, seed, params, cfg, band=None, width=1.0, mode=None,
                 return_report=False):
    """Initial perturbation with ``J_0 = J_eq + K_0`` of spectrum ``{lambda, lambda, nu}``.

    ``random-band``: smooth random ``u``, ``theta`` and axis perturbation on
    band ``band`` (default ``max(1, n // 2)``) with a Gaussian spectral
    envelope of ``width`` (integer wavenumber units); each random field is
    normalised to unit L^2 norm before scaling by ``amplitude``.
    ``single-mode``: the same fields supported on the wavenumber pair
    ``+-mode``.  ``tilt-axis``: ``u = theta = 0`` and a uniformly tilted axis.
    """
    if kind not in INITIAL_KINDS:
        raise ConfigurationError(f"initial data kind must be one of {INITIAL_KINDS}")
    if amplitude < 0:
        raise ConfigurationError("amplitude must be non-negative")
    n, N = cfg.n, cfg.N
    gn = Grid(n, N, cfg.band_norm)
    g2 = gn.with_modes(2 * n)
    Z0 = State.zeros(n, N, cfg.band_norm)
    if amplitude == 0:
        rep = InitialDataReport(kind, 0.0, seed, 0.0, 0.0, 0.0)
        return (Z0, rep) if return_report else Z0
    rng = np.random.default_rng(seed)
    b = max(1, n // 2) if band is None else band
    if b > n:
        raise ConfigurationError("initial band exceeds n")

    if kind == "random-band":
        env = gaussian_envelope(width)
        ru = random_field(gn, "vector", rng, band=b, envelope=env)
        rt = random_field(gn, "vector", rng, band=b, envelope=env)
        rn = random_field(gn, "vector", rng, band=b, envelope=env)
    elif kind == "single-mode":
        if mode is None:
            raise ConfigurationError("single-mode initial data needs a wavenumber")
        mode = tuple(int(m) for m in mode)
        if max(abs(m) for m in mode) > n or mode == (0, 0, 0):
            raise ConfigurationError(f"mode {mode} outside band {n} or zero")
        ru, rt, rn = (_single_mode(gn, mode, rng) for _ in range(3))
    else:
        ru = SpectralField.zeros(gn, "vector")
        rt = SpectralField.zeros(gn, "vector")
        phi = rng.uniform(0, 2 * np.pi)
        c = np.zeros((3,) + gn.shape, dtype=complex)
        c[:, n, n, n] = [np.cos(phi), np.sin(phi), 0.0]
        rn = SpectralField(gn, "vector", c)

    uc = leray_coeffs(ru.coeffs, gn)
    uc[:, n, n, n] = 0.0
    u = _unit_l2(SpectralField(gn, "vector", uc)) * amplitude
    th = _unit_l2(rt) * amplitude
    pert = _unit_l2(rn) if kind != "tilt-axis" else rn
    vec = coeffs_to_physical(pert.coeffs, N) * amplitude
    vec[2] += 1.0
    vec = vec / np.sqrt(np.sum(vec ** 2, axis=0))
    Kx = microinertia_from_axis(vec, params)
    Kinf = float(np.sqrt(np.sum(Kx ** 2, axis=(0, 1))).max())
    limit = min(params.lam / 2, abs(params.nu - params.lam))
    if Kinf >= limit:
        raise ConfigurationError(
            f"amplitude too large: ||K0||_inf = {Kinf:.3e} >= {limit:.3e}")
    dev_pre = _spectrum_deviation(Kx, params)
    Kc = sym_from6(physical_to_coeffs(sym_to6(Kx), 2 * n)) * g2.mask()
    Kc = hermitian_part(0.5 * (Kc + Kc.swapaxes(0, 1)))
    Z = State(u, th, SpectralField(g2, "sym", Kc))
    dev_post = _spectrum_deviation(coeffs_to_physical(Kc, N), params)
    if return_report:
        return Z, InitialDataReport(kind, amplitude, seed, Kinf, dev_pre, dev_post)
    return Z


def _single_mode(grid, mode, rng):
    n = grid.n_modes
    c = np.zeros((3,) + grid.shape, dtype=complex)
    v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    i, j, l = mode
    c[:, n + i, n + j, n + l] = v
    c[:, n - i, n - j, n - l] = np.conj(v)
    return SpectralField(grid, "vector", c)


def _spectrum_deviation(K, params):
    J = K + params.J_eq.reshape((3, 3) + (1,) * (K.ndim - 2))
    # the closed-form 3x3 eigenvalues lose digits at the double eigenvalue
    ev = np.moveaxis(np.linalg.eigvalsh(np.moveaxis(J, (0, 1), (-2, -1))), -1, 0)
    target = np.sort(params.J_diag).reshape((3,) + (1,) * (K.ndim - 2))
    return float(np.abs(ev - target).max())
