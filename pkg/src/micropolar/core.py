"""Parameters, state, constitutive tensors and right-hand sides.

Conventions: ``(grad u)_ij = d_j u_i``, ``ten(a) v = a x v`` and ``vc`` is its
inverse on antisymmetric matrices.  The perturbation variables are
``u``, ``theta = omega - omega_eq`` and ``K = J - J_eq`` with
``omega_eq = tau_tilde e3`` and ``J_eq = diag(lambda, lambda, nu)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields
from functools import lru_cache
from math import comb

import numpy as np

from . import kernels
from .errors import BandError, ConfigurationError, NumericalError
from .fields import (
    Grid,
    SpectralField,
    check_dealias,
    coeffs_to_physical,
    fast_size,
    gradient_coeffs,
    hermitian_part,
    leray_coeffs,
    physical_to_coeffs,
    real_inner,
)

# ---------------------------------------------------------------------------
# Pointwise algebra (tensor slots lead, any trailing shape)

_SYM_IDX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def ten(a):
    a = np.asarray(a)
    z = np.zeros_like(a[0])
    return np.array([[z, -a[2], a[1]], [a[2], z, -a[0]], [-a[1], a[0], z]])


def vc(A):
    """Axial vector of the antisymmetric part of ``A``."""
    A = np.asarray(A)
    return 0.5 * np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def sym(A):
    return 0.5 * (A + np.swapaxes(A, 0, 1))


def matmul(A, B):
    return np.einsum("ij...,jk...->ik...", A, B)


def commutator(A, B):
    return matmul(A, B) - matmul(B, A)


def frob(A, B):
    return np.einsum("ij...,ij...->...", A, B)


def perp(v):
    """Quarter turn ``(v1, v2) -> (-v2, v1)`` of a planar vector (or of ``v[:2]``)."""
    return np.array([-v[1], v[0]])


def lift_perp(w):
    """``(-w2, w1, 0)``."""
    return np.array([-w[1], w[0], np.zeros_like(w[0])])


_R2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def commutator_block_form(omega, J):
    """``[ten(omega), J]`` assembled from its 2+1 block decomposition.

    Upper-left block ``omega3 [R, Jbar] - (wp (x) a + a (x) wp)``, column
    ``(Jbar - J33 I) wp + omega3 a_perp`` and corner ``2 a . wp`` where
    ``a = (J13, J23)`` and ``wp`` is the planar quarter turn of
    ``(omega1, omega2)``.
    """
    omega = np.asarray(omega, dtype=float)
    J = np.asarray(J, dtype=float)
    w3 = omega[2]
    wp = perp(omega)
    a = J[:2, 2]
    Jb = J[:2, :2]
    R = _R2.reshape((2, 2) + (1,) * (J.ndim - 2))
    ul = w3 * (matmul(R, Jb) - matmul(Jb, R)) - (
        np.einsum("i...,j...->ij...", wp, a) + np.einsum("i...,j...->ij...", a, wp))
    col = np.einsum("ij...,j...->i...", Jb, wp) - J[2, 2] * wp + w3 * perp(a)
    out = np.empty_like(J)
    out[:2, :2] = ul
    out[:2, 2] = col
    out[2, :2] = col
    out[2, 2] = 2.0 * np.einsum("i...,i...->...", a, wp)
    return out


# ---------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class PhysParams:
    """Viscosities, microtorque and microinertia eigenvalues.

    The repeated eigenvalue is stored as ``lam`` (``lambda`` in config files).
    """

    mu: float
    kappa: float
    alpha: float
    beta: float
    gamma: float
    tau: float
    lam: float
    nu: float

    def __post_init__(self):
        for f in dc_fields(self):
            v = float(getattr(self, f.name))
            if not np.isfinite(v):
                raise ConfigurationError(f"parameter {f.name} is not finite")
            object.__setattr__(self, f.name, v)
        for name in ("mu", "kappa", "alpha", "beta", "gamma", "lam", "nu"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"parameter {_external(name)} must be positive")
        if self.tau <= 0:
            raise ConfigurationError("parameter tau must be positive")
        if self.lam == self.nu:
            raise ConfigurationError("lambda == nu: the microinertia must have a distinguished axis")

    KEYS = ("mu", "kappa", "alpha", "beta", "gamma", "tau", "lambda", "nu")

    @classmethod
    def from_dict(cls, d, where="params"):
        if not isinstance(d, dict):
            raise ConfigurationError(f"{where}: expected a mapping")
        unknown = sorted(set(d) - set(cls.KEYS))
        if unknown:
            raise ConfigurationError(f"{where}: unknown key(s) {unknown}")
        missing = [k for k in cls.KEYS if k not in d]
        if missing:
            raise ConfigurationError(f"{where}: missing key(s) {missing}")
        for k in cls.KEYS:
            if isinstance(d[k], bool) or not isinstance(d[k], (int, float)):
                raise ConfigurationError(f"{where}.{k}: expected a number, got {d[k]!r}")
        return cls(**{("lam" if k == "lambda" else k): d[k] for k in cls.KEYS})

    def to_dict(self):
        return {_external(f.name): getattr(self, f.name) for f in dc_fields(self)}

    @classmethod
    def unit(cls, lam=1.0, nu=2.0, tau=1.0):
        return cls(1.0, 1.0, 1.0, 1.0, 1.0, tau, lam, nu)

    @property
    def alpha_tilde(self):
        return self.alpha + 4.0 * self.beta / 3.0

    @property
    def gamma_tilde(self):
        return self.beta + self.gamma

    @property
    def tau_tilde(self):
        return self.tau / (2.0 * self.kappa)

    @property
    def oblate(self):
        return self.nu > self.lam

    @property
    def a_weight(self):
        """Weight ``tau_tilde^2/(nu - lambda)`` of ``|a|^2`` in the energy."""
        return self.tau_tilde ** 2 / (self.nu - self.lam)

    @property
    def J_eq(self):
        return np.diag([self.lam, self.lam, self.nu])

    @property
    def J_diag(self):
        return np.array([self.lam, self.lam, self.nu])

    @property
    def omega_eq(self):
        return np.array([0.0, 0.0, self.tau_tilde])


def _external(name):
    return "lambda" if name == "lam" else name


def load_params(path):
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh)
    return PhysParams.from_dict(data, where=str(path))


# ---------------------------------------------------------------------------
# State


def sym_from6(c6):
    out = np.empty((3, 3) + c6.shape[1:], dtype=c6.dtype)
    for n, (i, j) in enumerate(_SYM_IDX):
        out[i, j] = c6[n]
        out[j, i] = c6[n]
    return out


def sym_to6(S):
    return np.stack([S[i, j] for i, j in _SYM_IDX])


@dataclass(frozen=True, eq=False)
class State:
    """Perturbation ``(u, theta, K)``; ``u`` and ``theta`` share a band, ``K`` lives on twice it."""

    u: SpectralField
    theta: SpectralField
    K: SpectralField

    def __post_init__(self):
        if self.u.rank != "vector" or self.theta.rank != "vector" or self.K.rank != "sym":
            raise ConfigurationError("State needs vector u, vector theta and sym K")
        if self.u.grid != self.theta.grid:
            raise BandError("u and theta must share a grid")
        if self.K.grid.n_modes != 2 * self.u.grid.n_modes or self.K.grid.phys_size != self.u.grid.phys_size:
            raise BandError("K must live on band 2n with the same transform size")

    @property
    def n(self):
        return self.u.grid.n_modes

    @property
    def grid_n(self):
        return self.u.grid

    @property
    def grid_2n(self):
        return self.K.grid

    @property
    def a(self):
        return SpectralField(self.K.grid, "planar", self.K.coeffs[:2, 2].copy())

    def J_physical(self, params, N=None):
        K = coeffs_to_physical(self.K.coeffs, N or self.K.grid.phys_size)
        return K + params.J_eq.reshape(3, 3, 1, 1, 1)

    def arrays(self):
        return self.u.coeffs, self.theta.coeffs, self.K.coeffs

    @classmethod
    def from_arrays(cls, u, theta, K, grid_n, grid_2n=None):
        grid_2n = grid_2n or grid_n.with_modes(2 * grid_n.n_modes)
        return cls(SpectralField(grid_n, "vector", u), SpectralField(grid_n, "vector", theta),
                   SpectralField(grid_2n, "sym", K))

    @classmethod
    def zeros(cls, n, N=None, norm="linf"):
        N = N or default_size(n)
        g = Grid(n, N, norm)
        return cls(SpectralField.zeros(g, "vector"), SpectralField.zeros(g, "vector"),
                   SpectralField.zeros(g.with_modes(2 * n), "sym"))

    def scaled(self, s):
        return State(self.u * s, self.theta * s, self.K * s)


@dataclass(frozen=True, eq=False)
class Tangent:
    """One time derivative of a State."""

    du: SpectralField
    dtheta: SpectralField
    dK: SpectralField

    def arrays(self):
        return self.du.coeffs, self.dtheta.coeffs, self.dK.coeffs

    @property
    def da(self):
        return SpectralField(self.dK.grid, "planar", self.dK.coeffs[:2, 2].copy())


def default_size(n):
    """Transform size for the cubic products of a band-``n`` state."""
    return fast_size(5 * n + 1)


# ---------------------------------------------------------------------------
# Constitutive tensors (linear, evaluated spectrally)


def _sym_grad(g):
    return g + g.swapaxes(0, 1)


def _curl(c, grid):
    ik = 1j * grid.wavenumbers
    return np.array([ik[1] * c[2] - ik[2] * c[1],
                     ik[2] * c[0] - ik[0] * c[2],
                     ik[0] * c[1] - ik[1] * c[0]])


def _div(c, grid):
    return np.einsum("i...,i...->...", 1j * grid.wavenumbers, c)


def _check_grid(*fs):
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise BandError("fields are on different grids")
    return g


def stress_tensor(u, p, omega, params):
    """``T = mu D u + kappa ten(curl u / 2 - omega) - p I``."""
    g = _check_grid(u, p, omega)
    gu = gradient_coeffs(u.coeffs, g)
    T = params.mu * _sym_grad(gu) + params.kappa * ten(0.5 * _curl(u.coeffs, g) - omega.coeffs)
    for i in range(3):
        T[i, i] -= p.coeffs
    return SpectralField(g, "matrix", T)


def couple_stress(omega, params):
    """``M = alpha (div w) I + beta D0 w + gamma ten(curl w)``."""
    g = omega.grid
    gw = gradient_coeffs(omega.coeffs, g)
    dv = _div(omega.coeffs, g)
    D0 = _sym_grad(gw)
    M = params.beta * D0 + params.gamma * ten(_curl(omega.coeffs, g))
    for i in range(3):
        D0[i, i] -= 2.0 / 3.0 * dv
        M[i, i] += params.alpha * dv - params.beta * 2.0 / 3.0 * dv
    return SpectralField(g, "matrix", M)


def div_couple_stress_coeffs(th, grid, params):
    """``div M(theta) = (alpha~ - gamma~) grad div theta + gamma~ Lap theta``."""
    k = grid.wavenumbers
    kd = np.einsum("i...,i...->...", k, th)
    return -(params.alpha_tilde - params.gamma_tilde) * k * kd - params.gamma_tilde * grid.k2 * th


# ---------------------------------------------------------------------------
# Evaluation engine


def _jet_sum(fn, X, Y, r):
    """Leibniz combination ``sum_i C(r,i) fn(X[i], Y[r-i])``."""
    out = None
    for i in range(r + 1):
        term = fn(X[i], Y[r - i])
        c = comb(r, i)
        term = term if c == 1 else c * term
        out = term if out is None else out + term
    return out


class Engine:
    """Shared machinery for the perturbative and Galerkin right-hand sides.

    Holds the band-``n`` and band-``2n`` grids, a transform size large enough
    for every cubic product, and evaluates the nonlinear brackets exactly.
    Time derivatives of any order are produced by Leibniz expansion of the
    same brackets ("jets").
    """

    def __init__(self, n, params, N=None, norm="linf", cg_tol=1e-10, cg_maxiter=200,
                 eig_floor=0.5):
        N = N or default_size(n)
        check_dealias(N, n, 2 * n, n, n)
        check_dealias(N, n, 2 * n, 2 * n)
        self.n, self.N, self.params = n, N, params
        self.grid_n = Grid(n, N, norm)
        self.grid_2n = Grid(2 * n, N, norm)
        self.mask_n = self.grid_n.mask()
        self.mask_2n = self.grid_2n.mask()
        self.cg_tol, self.cg_maxiter = cg_tol, cg_maxiter
        self.eig_floor = eig_floor
        self.last_cg_iterations = 0
        self.Jd = params.J_diag.reshape(3, 1, 1, 1)
        self.Jeq_phys = params.J_eq.reshape(3, 3, 1, 1, 1)
        self.weq = params.omega_eq.reshape(3, 1, 1, 1)

    # -- transforms -----------------------------------------------------
    def phys(self, c):
        return coeffs_to_physical(c, self.N)

    def phys_sym(self, c):
        return sym_from6(coeffs_to_physical(sym_to6(c), self.N))

    def spec_n(self, f):
        return physical_to_coeffs(f, self.n) * self.mask_n

    def spec_2n(self, f):
        return physical_to_coeffs(f, 2 * self.n) * self.mask_2n

    def spec_2n_sym(self, S):
        return sym_from6(physical_to_coeffs(sym_to6(sym(S)), 2 * self.n) * self.mask_2n)

    # -- linear spectral pieces ----------------------------------------
    def linear_u(self, u, th):
        p, g = self.params, self.grid_n
        return -(p.mu + 0.5 * p.kappa) * g.k2 * u + p.kappa * _curl(th, g)

    def linear_theta(self, u, th):
        """``2 vc T + div M`` without the pressure: ``kappa curl u - 2 kappa th + div M``."""
        p, g = self.params, self.grid_n
        return p.kappa * _curl(u, g) - 2.0 * p.kappa * th + div_couple_stress_coeffs(th, g, p)

    # -- physical jets ---------------------------------------------------
    def physical_order(self, u, th, K):
        """Physical fields and gradients for one jet order."""
        gn = self.grid_n
        d = {
            "u": self.phys(u),
            "th": self.phys(th),
            "K": self.phys_sym(K),
            "gu": self.phys(gradient_coeffs(u, gn)),
            "gth": self.phys(gradient_coeffs(th, gn)),
        }
        gK6 = gradient_coeffs(sym_to6(K), self.grid_2n)
        gK6 = coeffs_to_physical(gK6, self.N)
        gK = np.empty((3, 3, 3) + gK6.shape[2:])
        for m, (i, j) in enumerate(_SYM_IDX):
            gK[i, j] = gK6[m]
            gK[j, i] = gK6[m]
        d["gK"] = gK
        return d

    def brackets(self, P, r):
        """Order-``r`` time derivative of the three brackets.

        ``P`` is a list of physical jets (``physical_order`` outputs) up to
        order ``r``.  Returns physical arrays ``(A_u, G_th, F_K)`` where
        ``A_u = (u.grad u)^(r)``, ``G_th`` is the nonlinear part of the
        theta bracket ``-(J u.grad th) - omega x J omega`` and ``F_K`` the
        unprojected right side of the K equation.
        """
        u = [p["u"] for p in P]
        th = [p["th"] for p in P]
        gu = [p["gu"] for p in P]
        gth = [p["gth"] for p in P]
        gK = [p["gK"] for p in P]
        J = [P[0]["K"] + self.Jeq_phys] + [p["K"] for p in P[1:]]
        w = [th[0] + self.weq] + th[1:]
        adv = kernels.advect
        A_u = _jet_sum(adv, u, gu, r)
        ugth = [_jet_sum(adv, u, gth, s) for s in range(r + 1)]
        Jugth = _jet_sum(kernels.matvec, J, ugth, r)
        Jw = [_jet_sum(kernels.matvec, J, w, s) for s in range(r + 1)]
        wJw = _jet_sum(kernels.cross, w, Jw, r)
        G = -Jugth - wJw
        ugK = _jet_sum(lambda a, g: kernels.advect(a, g.reshape(9, 3, *g.shape[3:])).reshape(
            (3, 3) + g.shape[3:]), u, gK, r)
        F_K = _jet_sum(kernels.commutator_ten, w, J, r) - ugK
        return A_u, G, F_K

    def spectral_brackets(self, Z, P, r):
        """Projected order-``r`` brackets: ``(F_u, g_th, F_K)`` coefficients."""
        A_u, G, F_K = self.brackets(P, r)
        u, th, _ = Z[r]
        F_u = -leray_coeffs(self.spec_n(A_u), self.grid_n) + self.linear_u(u, th)
        g = self.spec_n(G) + self.linear_theta(u, th)
        return F_u, g, self.spec_2n_sym(F_K)

    # -- operator T_n(K) ----------------------------------------------------
    def apply_T(self, K_phys, v):
        return self.Jd * v + self.spec_n(kernels.matvec(K_phys, self.phys(v)))

    def solve_T(self, K_phys, f, tol=None, maxiter=None, check=True):
        """Preconditioned conjugate gradient for ``(J_eq + P_n K) v = f``."""
        tol = self.cg_tol if tol is None else tol
        maxiter = self.cg_maxiter if maxiter is None else maxiter
        if check:
            kinf = float(np.sqrt(np.sum(K_phys ** 2, axis=(0, 1))).max())
            if kinf >= 0.5 * self.params.lam:
                raise NumericalError(
                    f"||K||_inf = {kinf:.3e} >= lambda/2: T_n(K) not guaranteed invertible")
        fnorm = np.sqrt(real_inner(f, f))
        if fnorm == 0.0:
            self.last_cg_iterations = 0
            return np.zeros_like(f)
        x = f / self.Jd
        r = f - self.apply_T(K_phys, x)
        z = r / self.Jd
        p = z.copy()
        rz = real_inner(r, z)
        for it in range(1, maxiter + 1):
            if np.sqrt(real_inner(r, r)) <= tol * fnorm:
                self.last_cg_iterations = it - 1
                return x
            Ap = self.apply_T(K_phys, p)
            step = rz / real_inner(p, Ap)
            x = x + step * p
            r = r - step * Ap
            z = r / self.Jd
            rz_new = real_inner(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if np.sqrt(real_inner(r, r)) <= tol * fnorm:
            self.last_cg_iterations = maxiter
            return x
        raise NumericalError(f"CG did not reach tol {tol:g} in {maxiter} iterations")

    def _pointwise_inverse(self, Jphys, b):
        if self.eig_floor is not None:
            ev = kernels.sym_eigvalsh(Jphys)
            lo = ev[0]
            if lo.min() <= self.eig_floor * self.params.lam:
                idx = np.unravel_index(np.argmin(lo), lo.shape)
                x = tuple(int(i) for i in idx)
                raise NumericalError(
                    f"J_eq + K has eigenvalue {lo.min():.3e} <= {self.eig_floor} lambda "
                    f"at grid point {x}")
        return kernels.sym_solve(Jphys, b)

    # -- derivatives ----------------------------------------------------
    def derivatives(self, u, th, K, j_max, mode="galerkin"):
        """``[Z, dZ, ..., d^j_max Z]`` as coefficient triples.

        ``mode="galerkin"`` inverts ``T_n(K)`` by CG; ``mode="pointwise"``
        applies ``(J_eq + K)^-1`` on the physical grid, differentiating the
        pointwise relation so that the recursion is the exact time
        derivative of the pointwise evaluator.
        """
        Z = [(u, th, K)]
        P = [self.physical_order(u, th, K)]
        Kp = P[0]["K"]
        Jphys = Kp + self.Jeq_phys
        phi = []
        for r in range(j_max):
            F_u, g, F_K = self.spectral_brackets(Z, P, r)
            if mode == "galerkin":
                rhs = g
                for i in range(1, r + 1):
                    rhs = rhs - comb(r, i) * self.spec_n(
                        kernels.matvec(P[i]["K"], P[r + 1 - i]["th"]))
                th_next = self.solve_T(Kp, rhs, check=(r == 0))
            elif mode == "pointwise":
                b = self.phys(g)
                for i in range(1, r + 1):
                    b = b - comb(r, i) * kernels.matvec(P[i]["K"], phi[r - i])
                phi.append(self._pointwise_inverse(Jphys, b))
                th_next = self.spec_n(phi[r])
            else:
                raise ConfigurationError(f"unknown mode {mode!r}")
            Z.append((F_u, th_next, F_K))
            if r + 1 < j_max:
                P.append(self.physical_order(*Z[-1]))
        return Z

    def pressure(self, u):
        """``p = -Lap^-1 div(u.grad u)`` on band ``n``, zero mean."""
        A = self.spec_n(kernels.advect(self.phys(u), self.phys(gradient_coeffs(u, self.grid_n))))
        g = self.grid_n
        k2 = g.k2
        inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        return np.einsum("i...,i...->...", 1j * g.wavenumbers, A) * inv


@lru_cache(maxsize=16)
def get_engine(n, params, N=None, norm="linf"):
    return Engine(n, params, N=N, norm=norm)


def engine_for(Z, params):
    return get_engine(Z.n, params, Z.grid_n.phys_size, Z.grid_n.norm)


def _tangent(Z, du, dth, dK):
    return Tangent(SpectralField(Z.grid_n, "vector", du),
                   SpectralField(Z.grid_n, "vector", dth),
                   SpectralField(Z.grid_2n, "sym", dK))


def rhs_perturbative(Z, params):
    """Right side of the perturbative system with pointwise inversion of ``J``.

    Returns ``(Tangent, p)`` where ``p`` is the pressure by-product.
    """
    eng = engine_for(Z, params)
    out = eng.derivatives(*Z.arrays(), j_max=1, mode="pointwise")
    p = SpectralField(Z.grid_n, "scalar", eng.pressure(Z.u.coeffs))
    return _tangent(Z, *out[1]), p


def temporal_derivatives(Z, params, j_max=2, max_order=6):
    """``[dZ/dt, ..., d^j_max Z/dt^j_max]`` for the perturbative system."""
    if j_max < 1:
        raise ConfigurationError("j_max must be at least 1")
    if j_max > max_order:
        raise ConfigurationError(f"j_max={j_max} above the configured maximum {max_order}")
    eng = engine_for(Z, params)
    out = eng.derivatives(*Z.arrays(), j_max=j_max, mode="pointwise")
    return [_tangent(Z, *t) for t in out[1:]]


def rhs_a(Z, params):
    """``da/dt = -u.grad a - (nu-lam) thbar_perp + (Kbar - K33 I) thbar_perp + (tau~ + th3) a_perp``."""
    eng = engine_for(Z, params)
    N = eng.N
    u = coeffs_to_physical(Z.u.coeffs, N)
    th = coeffs_to_physical(Z.theta.coeffs, N)
    K = coeffs_to_physical(Z.K.coeffs, N)
    a = K[:2, 2]
    ga = coeffs_to_physical(gradient_coeffs(Z.K.coeffs[:2, 2], Z.grid_2n), N)
    thp = perp(th[:2])
    out = -np.einsum("j...,cj...->c...", u, ga)
    out = out - (params.nu - params.lam) * thp
    Kb = K[:2, :2].copy()
    Kb[0, 0] -= K[2, 2]
    Kb[1, 1] -= K[2, 2]
    out = out + np.einsum("ij...,j...->i...", Kb, thp)
    out = out + (params.tau_tilde + th[2]) * perp(a)
    c = physical_to_coeffs(out, Z.grid_2n.n_modes) * Z.grid_2n.mask()
    return SpectralField(Z.grid_2n, "planar", c)


def precession_split(omega_eq, theta, Jeq, K):
    """The three pieces of ``(w_eq+th) x (J_eq+K)(w_eq+th)`` (pointwise arrays)."""
    tail = (1,) * (np.ndim(theta) - 1)
    w_eq = np.asarray(omega_eq, dtype=float).reshape((3,) + tail)
    w = w_eq + theta
    J = np.asarray(Jeq, dtype=float).reshape((3, 3) + tail) + K
    a = K[:2, 2]
    t2 = float(np.asarray(omega_eq)[2]) ** 2
    first = np.cross(w, np.einsum("ij...,j...->i...", J, theta), axis=0)
    second = np.cross(theta, np.einsum("ij...,j...->i...", J, w_eq), axis=0)
    third = t2 * lift_perp(a)
    return first, second, third
