"""Energy, dissipation and interaction functionals; decay and bound checks.

Multi-indices are ``(a0, (a1, a2, a3))`` with ``a0`` the number of time
derivatives.  Their parabolic order is ``2 a0 + a1 + a2 + a3``.  Time
derivatives come from the jet recursion of the evaluation engine, so every
functional is evaluated at a single snapshot without finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from math import comb

import numpy as np

from . import kernels
from .core import (
    PhysParams,
    State,
    _curl,
    _div,
    _jet_sum,
    _sym_grad,
    engine_for,
    perp,
    sym_from6,
    sym_to6,
)
from .errors import ConfigurationError, NumericalError
from .fields import (
    coeffs_to_physical,
    derivative_symbol,
    gradient_coeffs,
    hs_norm_sq_coeffs,
    multi_indices,
    real_inner,
)

DEFAULT_J_MAX = 2


# ---------------------------------------------------------------------------
# Dissipation


def dissipation_coeffs(u, th, grid, params):
    """``D(u, theta)`` from band coefficients on ``grid``."""
    p = params
    if not np.any(u) and not np.any(th):
        return 0.0
    gu = gradient_coeffs(u, grid)
    gth = gradient_coeffs(th, grid)
    Du = _sym_grad(gu)
    rot = 0.5 * _curl(u, grid) - th
    dv = _div(th, grid)
    D0 = _sym_grad(gth)
    for i in range(3):
        D0[i, i] = D0[i, i] - 2.0 / 3.0 * dv
    ct = _curl(th, grid)
    return (0.5 * p.mu * real_inner(Du, Du) + 2.0 * p.kappa * real_inner(rot, rot)
            + p.alpha * real_inner(dv, dv) + 0.5 * p.beta * real_inner(D0, D0)
            + p.gamma * real_inner(ct, ct))


def dissipation(u, theta, params):
    """``D(u, theta)`` for two vector fields on one grid (nonnegative)."""
    if u.grid != theta.grid:
        raise ConfigurationError("u and theta must share a grid")
    return max(dissipation_coeffs(u.coeffs, theta.coeffs, u.grid, params), 0.0)


def stress_pairing(u, p, theta, params):
    """``int T:(grad u - Theta) + M:grad theta`` by quadrature, ``Theta = ten(theta)``."""
    from .core import couple_stress, stress_tensor, ten

    N = u.grid.phys_size
    T = coeffs_to_physical(stress_tensor(u, p, theta, params).coeffs, N)
    M = coeffs_to_physical(couple_stress(theta, params).coeffs, N)
    gu = coeffs_to_physical(gradient_coeffs(u.coeffs, u.grid), N)
    gth = coeffs_to_physical(gradient_coeffs(theta.coeffs, theta.grid), N)
    Th = ten(coeffs_to_physical(theta.coeffs, N))
    val = np.einsum("ij...,ij...->...", T, gu - Th) + np.einsum("ij...,ij...->...", M, gth)
    return float(np.mean(val))


# ---------------------------------------------------------------------------
# Jets


def parabolic_indices(order, t_min=0, t_max=None):
    """Multi-indices ``(a0, abar)`` with parabolic order ``<= order`` and ``t_min <= a0 <= t_max``."""
    t_hi = order // 2 if t_max is None else min(t_max, order // 2)
    return [(a0, ab) for a0 in range(t_min, t_hi + 1) for ab in multi_indices(order - 2 * a0)]


class Jets:
    """Time derivatives ``d^j (u, theta, K)`` at one instant, ``j = 0..order``."""

    def __init__(self, Z, params, order, mode="galerkin"):
        if order < 0:
            raise ConfigurationError("jet order must be non-negative")
        self.Z, self.params, self.order, self.mode = Z, params, order, mode
        self.eng = engine_for(Z, params)
        if order == 0:
            trip = [Z.arrays()]
        else:
            trip = self.eng.derivatives(*Z.arrays(), j_max=order, mode=mode)
        self.u = [t[0] for t in trip]
        self.th = [t[1] for t in trip]
        self.K = [t[2] for t in trip]
        self.a = [k[:2, 2] for k in self.K]
        self._phys = {}

    @property
    def gn(self):
        return self.eng.grid_n

    @property
    def g2(self):
        return self.eng.grid_2n

    def physical(self, j):
        if j not in self._phys:
            self._phys[j] = self.eng.physical_order(self.u[j], self.th[j], self.K[j])
            self._phys[j]["a"] = self._phys[j]["K"][:2, 2]
            self._phys[j]["ga"] = self._phys[j]["gK"][:2, 2]
        return self._phys[j]

    def need(self, j):
        if j > self.order:
            raise ConfigurationError(f"time derivative of order {j} beyond the computed jets ({self.order})")


# ---------------------------------------------------------------------------
# Per multi-index energy, rate and interactions


def _a_weight(params):
    return params.a_weight


def _theta_J_energy(jets, th_coeffs):
    """``int J v.v`` for a band-n vector field ``v`` given by coefficients."""
    eng = jets.eng
    Jd = jets.params.J_diag.reshape(3, 1, 1, 1)
    val = real_inner(Jd * th_coeffs, th_coeffs)
    if np.any(jets.K[0]):
        v = eng.phys(th_coeffs)
        K = jets.physical(0)["K"]
        val += float(np.mean(np.einsum("i...,i...->...", kernels.matvec(K, v), v)))
    return val


def energy_alpha(jets, alpha):
    """``1/2 |d^a u|^2 + 1/2 int J d^a th . d^a th + w/2 |d^a a|^2``."""
    a0, ab = alpha
    jets.need(a0)
    S = derivative_symbol(jets.gn, ab)
    S2 = derivative_symbol(jets.g2, ab)
    Du, Dth, Da = S * jets.u[a0], S * jets.th[a0], S2 * jets.a[a0]
    w = _a_weight(jets.params)
    return 0.5 * real_inner(Du, Du) + 0.5 * _theta_J_energy(jets, Dth) + 0.5 * w * real_inner(Da, Da)


def energy_rate_alpha(jets, alpha):
    """Exact time derivative of ``energy_alpha`` from the jets."""
    a0, ab = alpha
    jets.need(a0 + 1)
    eng = jets.eng
    S = derivative_symbol(jets.gn, ab)
    S2 = derivative_symbol(jets.g2, ab)
    Du, Dth, Da = S * jets.u[a0], S * jets.th[a0], S2 * jets.a[a0]
    Du1, Dth1, Da1 = S * jets.u[a0 + 1], S * jets.th[a0 + 1], S2 * jets.a[a0 + 1]
    w = _a_weight(jets.params)
    Jd = jets.params.J_diag.reshape(3, 1, 1, 1)
    rate = real_inner(Du1, Du) + real_inner(Jd * Dth1, Dth) + w * real_inner(Da1, Da)
    v = eng.phys(Dth)
    v1 = eng.phys(Dth1)
    K0 = jets.physical(0)["K"]
    K1 = jets.physical(1)["K"]
    rate += float(np.mean(np.einsum("i...,i...->...", kernels.matvec(K0, v1), v)))
    rate += 0.5 * float(np.mean(np.einsum("i...,i...->...", kernels.matvec(K1, v), v)))
    return rate


@dataclass
class InteractionTerms:
    alpha: tuple
    parts: tuple
    rate: float | None = None
    dissipation: float | None = None

    @property
    def total(self):
        return float(sum(self.parts))

    @property
    def residual(self):
        if self.rate is None:
            return None
        return self.rate + self.dissipation - self.total


def interaction_alpha(jets, alpha, with_rate=True):
    """The eight interaction integrals for one multi-index.

    Commutators are ``[X, d^a] Y = X d^a Y - d^a (X Y)``; the three
    a-channel terms carry the energy weight ``tau~^2 / (nu - lam)``, and the
    rotation term ``w3 a_perp`` (right side of the a equation) enters with a
    minus sign so that the identity closes.
    """
    a0, ab = alpha
    jets.need(a0 + 1)
    eng = jets.eng
    p = jets.params
    w = _a_weight(p)
    S = derivative_symbol(jets.gn, ab)
    S2 = derivative_symbol(jets.g2, ab)
    P = [jets.physical(j) for j in range(a0 + 2)]
    u = [q["u"] for q in P]
    th = [q["th"] for q in P]
    gu = [q["gu"] for q in P]
    gth = [q["gth"] for q in P]
    ga = [q["ga"] for q in P]
    a = [q["a"] for q in P]
    J = [P[0]["K"] + eng.Jeq_phys] + [q["K"] for q in P[1:]]
    wv = [th[0] + eng.weq] + th[1:]

    Du = S * jets.u[a0]
    Dth = S * jets.th[a0]
    Da = S2 * jets.a[a0]
    du_g = eng.phys(gradient_coeffs(Du, jets.gn))
    dth_p = eng.phys(Dth)
    dth_g = eng.phys(gradient_coeffs(Dth, jets.gn))
    da_p = eng.phys(Da)
    da_g = eng.phys(gradient_coeffs(Da, jets.g2))
    adv = kernels.advect
    mv = kernels.matvec
    cr = kernels.cross

    # I1: [u.grad, d^a] u
    t1 = eng.spec_n(adv(u[0], du_g))
    t2 = S * eng.spec_n(_jet_sum(adv, u, gu, a0))
    I1 = real_inner(t1 - t2, Du)
    # I2: [J dt, d^a] theta
    t1 = eng.spec_n(mv(J[0], eng.phys(S * jets.th[a0 + 1])))
    t2 = S * eng.spec_n(_jet_sum(mv, J, th[1:], a0))
    I2 = real_inner(t1 - t2, Dth)
    # I3: [J u.grad, d^a] theta
    t1 = eng.spec_n(mv(J[0], adv(u[0], dth_g)))
    ugth = [_jet_sum(adv, u, gth, s) for s in range(a0 + 1)]
    t2 = S * eng.spec_n(_jet_sum(mv, J, ugth, a0))
    I3 = real_inner(t1 - t2, Dth)
    # I4: [w x J, d^a] theta
    t1 = eng.spec_n(cr(wv[0], mv(J[0], dth_p)))
    Jth = [_jet_sum(mv, J, th, s) for s in range(a0 + 1)]
    t2 = S * eng.spec_n(_jet_sum(cr, wv, Jth, a0))
    I4 = real_inner(t1 - t2, Dth)
    # I5: -[(J w_eq) x, d^a] theta
    weq = np.broadcast_to(eng.weq, th[0].shape)
    Jweq = [mv(Jj, weq) for Jj in J[: a0 + 1]]
    t1 = eng.spec_n(cr(Jweq[0], dth_p))
    t2 = S * eng.spec_n(_jet_sum(cr, Jweq, th, a0))
    I5 = -real_inner(t1 - t2, Dth)
    # I6: [u.grad, d^a] a
    t1 = eng.spec_2n(adv(u[0], da_g))
    t2 = S2 * eng.spec_2n(_jet_sum(adv, u, ga, a0))
    I6 = w * real_inner(t1 - t2, Da)
    # I7: -[w3 R, d^a] a  (the rotation sits on the right of the a equation)
    t1 = eng.spec_2n(th[0][2] * perp(da_p))
    t2 = S2 * eng.spec_2n(_jet_sum(lambda x, y: x[2] * perp(y), th, a, a0))
    I7 = -w * real_inner(t1 - t2, Da)
    # I8: d^a((Kbar - K33 I) thbar_perp)
    def _bar(K, t):
        tp = perp(t)
        return np.einsum("ij...,j...->i...", K[:2, :2], tp) - K[2, 2] * tp
    Kl = [q["K"] for q in P]
    t2 = S2 * eng.spec_2n(_jet_sum(_bar, Kl, th, a0))
    I8 = w * real_inner(t2, Da)

    out = InteractionTerms(alpha, (I1, I2, I3, I4, I5, I6, I7, I8))
    if with_rate:
        out.rate = energy_rate_alpha(jets, alpha)
        out.dissipation = dissipation_coeffs(Du, Dth, jets.gn, p)
    return out


def interaction_terms(Z, params, alpha_set=None, mode="galerkin", jets=None):
    """Interaction integrals ``I^alpha`` (with their eight parts) for each multi-index.

    ``alpha_set`` defaults to every index of parabolic order ``<= 2``.
    Returns ``{alpha: InteractionTerms}``; each entry also carries the exact
    energy rate and dissipation, so ``residual`` checks the identity
    ``dE/dt + D = I`` at this instant.
    """
    alpha_set = parabolic_indices(2) if alpha_set is None else [
        (int(a0), tuple(int(x) for x in ab)) for a0, ab in alpha_set]
    need = max(a0 for a0, _ in alpha_set) + 1
    if jets is None or jets.order < need:
        jets = Jets(Z, params, need, mode)
    return {al: interaction_alpha(jets, al) for al in alpha_set}


# ---------------------------------------------------------------------------
# Functionals


def _pnorm(lists, grids, order, t_min=0, t_max=None):
    """``||f||^2_{P^order_{t_min, t_max}}`` summed over several fields given as jets."""
    t_hi = order // 2 if t_max is None else min(t_max, order // 2)
    total = 0.0
    for a0 in range(t_min, t_hi + 1):
        for jets_f, g in zip(lists, grids):
            total += hs_norm_sq_coeffs(jets_f[a0], g, order - 2 * a0)
    return total


def energy_comparison_constants(params):
    w = params.a_weight
    return 0.5 * min(1.0, params.lam, w), 0.5 * max(1.0, params.nu, w)


@dataclass
class EnergyReport:
    """Every functional at one instant.  ``omitted`` lists time orders cut by ``j_max``."""

    time: float
    M: int
    j_max: int
    E_low: float
    E_bar_low: float
    E_tilde_low: float
    E_bar_M: float
    E_tilde_M: float
    E_M_K: float
    E_M: float
    F_M: float
    K_bar: dict
    K_low: float
    D: float
    D_bar_low: float
    D_low: float
    D_bar_M: float
    D_M_a: float
    D_M: float
    I_bar_low: float | None = None
    I_alpha: dict = field(default_factory=dict)
    omitted: list = field(default_factory=list)

    SCALARS = ("time", "M", "j_max", "E_low", "E_bar_low", "E_tilde_low", "E_bar_M", "E_tilde_M",
               "E_M_K", "E_M", "F_M", "K_low", "D", "D_bar_low", "D_low", "D_bar_M", "D_M_a",
               "D_M", "I_bar_low")

    def row(self):
        """Flat mapping of scalar entries (stable column names)."""
        out = {k: getattr(self, k) for k in self.SCALARS}
        for I, v in sorted(self.K_bar.items()):
            out[f"K_bar_{I}"] = v
        return out

    def to_dict(self):
        d = asdict(self)
        d["K_bar"] = {str(k): v for k, v in self.K_bar.items()}
        d["I_alpha"] = {str(k): v for k, v in self.I_alpha.items()}
        return d


def energy_report(Z, params, M=4, j_max=DEFAULT_J_MAX, time=0.0, mode="pointwise",
                  interactions=True, max_j=6):
    """Evaluate the energy, dissipation and interaction functionals of ``Z``.

    Time derivatives of order ``> j_max`` are not evaluated; the affected
    terms are dropped and listed in ``omitted``.  ``j_max`` must be at least
    2 (``E_low`` contains the second time derivative of ``a``).
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    if j_max < 2:
        raise ConfigurationError("j_max must be >= 2 for the low-level energy")
    if j_max > max_j:
        raise ConfigurationError(f"j_max={j_max} beyond the derivative cap {max_j}")
    jets = Jets(Z, params, j_max, mode)
    gn, g2 = jets.gn, jets.g2
    u, th, a, K = jets.u, jets.th, jets.a, jets.K
    omitted = []
    hs = hs_norm_sq_coeffs

    def P(order, t_min=0, t_max=None, fields=("u", "th", "a")):
        hi = order // 2 if t_max is None else min(t_max, order // 2)
        if hi > j_max:
            omitted.append(f"P^{order}[{','.join(fields)}] time orders {j_max + 1}..{hi}")
            hi = j_max
        lists = {"u": (u, gn), "th": (th, gn), "a": (a, g2)}
        sel = [lists[f] for f in fields]
        return _pnorm([s[0] for s in sel], [s[1] for s in sel], order, t_min, hi)

    def tilde(order):
        hi = min(order // 2, j_max)
        if order // 2 > j_max:
            omitted.append(f"E_tilde^{order} time orders {j_max + 1}..{order // 2}")
        return sum(energy_alpha(jets, al) for al in parabolic_indices(order, 0, hi))

    def dtk(j, s):
        if j > j_max:
            omitted.append(f"d_t^{j} K in H^{s}")
            return 0.0
        return hs(K[j], g2, s)

    def dta(j, s):
        if j > j_max:
            omitted.append(f"d_t^{j} a in H^{s}")
            return 0.0
        return hs(a[j], g2, s)

    E_bar_low = P(2)
    E_tilde_low = tilde(2)
    E_low = E_bar_low + hs(a[1], g2, 1) + hs(a[2], g2, 0)
    E_bar_M = P(2 * M)
    E_tilde_M = tilde(2 * M)
    if M >= 3:
        E_M_K = (dtk(0, 2 * M - 3) + dtk(1, 2 * M - 3) + dtk(2, 2 * M - 3)
                 + sum(dtk(j, 2 * M - 2 * j + 2) for j in range(3, M + 1)))
    else:
        E_M_K = 0.0
        omitted.append("E_M^(K) defined only for M >= 3")
    F_M = hs(K[0], g2, 2 * M + 1) + hs(K[1], g2, 2 * M) + hs(K[2], g2, 2 * M - 2)
    K_bar = {I: P(2 * I, 0, 1) for I in range(1, M + 1)}
    K_low = (K_bar[2] if 2 in K_bar else P(4, 0, 1)) + hs(th[2], gn, 0)
    D = dissipation_coeffs(u[0], th[0], gn, params)
    D_bar_low = P(3, fields=("u", "th"))
    D_low = D_bar_low + hs(a[0], g2, 1) + hs(a[1], g2, 0)
    D_bar_M = P(2 * M + 1, fields=("u", "th"))
    D_M_a = (sum(dta(j, 2 * M - j - 1) for j in range(0, 4))
             + sum(dta(j, 2 * M - 2 * j + 3) for j in range(4, M + 1)))
    I_low, I_alpha = None, {}
    if interactions:
        terms = interaction_terms(Z, params, parabolic_indices(2), jets=jets)
        I_alpha = {al: t.total for al, t in terms.items()}
        I_low = float(sum(I_alpha.values()))
    return EnergyReport(
        time=float(time), M=M, j_max=j_max, E_low=E_low, E_bar_low=E_bar_low,
        E_tilde_low=E_tilde_low, E_bar_M=E_bar_M, E_tilde_M=E_tilde_M, E_M_K=E_M_K,
        E_M=E_bar_M + E_M_K, F_M=F_M, K_bar=K_bar, K_low=K_low, D=D, D_bar_low=D_bar_low,
        D_low=D_low, D_bar_M=D_bar_M, D_M_a=D_M_a, D_M=D_bar_M + D_M_a, I_bar_low=I_low,
        I_alpha=I_alpha, omitted=sorted(set(omitted)))


# ---------------------------------------------------------------------------
# Energy-dissipation residual along a trajectory


@dataclass
class LevelBudget:
    """``E~``, summed dissipation and summed interactions at one snapshot."""

    time: float
    energy: float
    dissipation: float
    interaction: float
    rate: float


def level_budget(Z, params, level="low", M=1, time=0.0, mode="galerkin"):
    order = 2 if level == "low" else 2 * M
    if level not in ("low", "M"):
        raise ConfigurationError("level must be 'low' or 'M'")
    idx = parabolic_indices(order)
    need = max(a0 for a0, _ in idx) + 1
    jets = Jets(Z, params, need, mode)
    terms = interaction_terms(Z, params, idx, jets=jets)
    return LevelBudget(
        time=float(time),
        energy=float(sum(energy_alpha(jets, al) for al in idx)),
        dissipation=float(sum(t.dissipation for t in terms.values())),
        interaction=float(sum(t.total for t in terms.values())),
        rate=float(sum(t.rate for t in terms.values())))


@dataclass
class ResidualSeries:
    times: np.ndarray
    residual: np.ndarray
    budgets: list

    @property
    def max(self):
        return float(np.max(np.abs(self.residual)))

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.residual ** 2)))

    @property
    def scale(self):
        return float(max(max(abs(b.dissipation), abs(b.rate)) for b in self.budgets))


def ed_residual(trajectory, params, level="low", M=1, mode="galerkin", budgets=None):
    """``r = (E~(t+h) - E~(t-h)) / 2h + D - I`` at interior snapshots."""
    times = np.asarray(trajectory.times, dtype=float)
    if len(times) < 3:
        raise ConfigurationError("ed_residual needs at least 3 snapshots")
    h = np.diff(times)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ConfigurationError("ed_residual needs uniformly spaced snapshots")
    if budgets is None:
        budgets = [level_budget(Z, params, level, M, t, mode) for t, Z in trajectory]
    E = np.array([b.energy for b in budgets])
    r = (E[2:] - E[:-2]) / (2 * h[0])
    r = r + np.array([b.dissipation - b.interaction for b in budgets[1:-1]])
    return ResidualSeries(times[1:-1], r, budgets)


def windowed_ed_residual(Z0, params, cfg, centers, level="low", M=1, mode="galerkin"):
    """Centered ED residual at the snapshots nearest to ``centers``.

    Integrates ``Z0`` with ``cfg`` (one snapshot per step) and evaluates the
    budget only on the three snapshots around each centre, which keeps the
    cost independent of the number of steps.  Returns a ``ResidualSeries``.
    """
    from .galerkin import simulate

    h = cfg.dt
    steps = sorted({int(round(c / h)) for c in centers})
    if steps[0] < 1:
        raise ConfigurationError("window centres must be at least one step after t = 0")
    wanted = {j for c in steps for j in (c - 1, c, c + 1)}
    cfg = replace(cfg, t_end=(steps[-1] + 1) * h, snapshot_every=1)
    kept = {}

    def grab(t, Z):
        j = int(round(t / h))
        if j in wanted:
            kept[j] = (t, Z)

    simulate(Z0, params, cfg, callback=grab, keep=False)
    budgets, times, r = [], [], []
    for c in steps:
        b = [level_budget(kept[j][1], params, level, M, kept[j][0], mode) for j in (c - 1, c, c + 1)]
        times.append(kept[c][0])
        r.append((b[2].energy - b[0].energy) / (2 * h) + b[1].dissipation - b[1].interaction)
        budgets.append(b[1])
    return ResidualSeries(np.array(times), np.array(r), budgets)


# ---------------------------------------------------------------------------
# Transport bounds


@dataclass
class TransportReport:
    p: object
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tol: float

    @property
    def margin(self):
        return float(np.min(self.rhs + self.tol - self.lhs))

    @property
    def holds(self):
        return bool(np.all(self.lhs <= self.rhs + self.tol))


def _lp(field, N, p):
    v = coeffs_to_physical(field, N)
    mag = np.sqrt(np.sum(v ** 2, axis=tuple(range(v.ndim - 3))))
    if p == 2:
        return float(np.sqrt(np.mean(mag ** 2)))
    return float(mag.max())


def transport_bound_check(trajectory, params, p=2, tol=None):
    """``||K(t)||_p <= ||K(0)||_p + int_0^t sqrt(2) (nu - lam) ||thbar||_p ds`` at every snapshot.

    The integral uses the trapezoid rule on the snapshot times; the default
    tolerance is ``1e-10 + dt^2`` times the integral scale.
    """
    if p not in (2, np.inf, "inf"):
        raise ConfigurationError("p must be 2 or inf")
    p = 2 if p == 2 else np.inf
    K_lp, th_lp = [], []
    for _, Z in trajectory:
        N = Z.grid_n.phys_size
        K_lp.append(_lp(Z.K.coeffs, N, p))
        th_lp.append(_lp(Z.theta.coeffs[:2], N, p))
    return transport_bound_from_series(trajectory.times, K_lp, th_lp, params, p, tol)


def rotate_K(K, params, t):
    """Exact solution of ``dK/dt = [Omega_eq, K]``: ``Q K Q^T`` with ``Q = exp(t Omega_eq)``."""
    phi = params.tau_tilde * t
    c, s = np.cos(phi), np.sin(phi)
    Q = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.einsum("ij,jk...,lk->il...", Q, K, Q)


def advect_rotate(S0, u, params, dt, n_steps):
    """RK4 for ``dS/dt + u.grad S = [Omega_eq, S]`` on the band of ``S0`` (``u`` frozen).

    ``S0`` is a band-``2n`` sym field and ``u`` a band-``n`` vector field on
    the same transform size.  Returns the list of coefficient arrays.
    """
    from .core import ten

    g2, gn = S0.grid, u.grid
    N = g2.phys_size
    W = ten(params.omega_eq)
    up = coeffs_to_physical(u.coeffs, N)
    mask = g2.mask()

    def f(S):
        gS = coeffs_to_physical(gradient_coeffs(sym_to6(S), g2), N)
        adv = np.einsum("j...,cj...->c...", up, gS)
        from .fields import physical_to_coeffs
        adv = sym_from6(physical_to_coeffs(adv, g2.n_modes) * mask)
        rot = np.einsum("ij,jk...->ik...", W, S) - np.einsum("ij...,jk->ik...", S, W)
        return rot - adv

    out = [S0.coeffs]
    S = S0.coeffs
    for _ in range(n_steps):
        k1 = f(S)
        k2 = f(S + 0.5 * dt * k1)
        k3 = f(S + 0.5 * dt * k2)
        k4 = f(S + dt * k3)
        S = S + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(S)
    return out


# ---------------------------------------------------------------------------
# Coercivity, Bihari envelope, decay fits


def coercivity_exponent(M):
    if M < 2:
        raise ConfigurationError("the coercivity exponent needs M >= 2")
    return (2 * M - 2) / (2 * M - 1)


@dataclass
class CoercivityRatio:
    value: float
    theta: float
    flagged: bool


def theta_coercivity_check(report, M=None):
    """``E_bar_low / (E_bar_M^(1-theta) D_low^theta)``, flagged zero when ``D_low = 0``."""
    M = report.M if M is None else M
    th = coercivity_exponent(M)
    if report.D_low <= 0.0 or report.E_bar_M <= 0.0:
        return CoercivityRatio(0.0, th, True)
    val = report.E_bar_low / (report.E_bar_M ** (1.0 - th) * report.D_low ** th)
    return CoercivityRatio(float(val), th, False)


def bihari_envelope(alpha0, C_tilde, M, t, y0=None):
    """``alpha0 ((alpha0 / y0)^(1/beta) + C t)^(-beta)`` with ``beta = 2M - 2`` (``y0`` defaults to ``alpha0``)."""
    if not alpha0 > 0:
        raise ConfigurationError("alpha0 must be positive")
    beta = 2 * M - 2
    if beta <= 0:
        raise ConfigurationError("M must be >= 2")
    y0 = alpha0 if y0 is None else y0
    t = np.asarray(t, dtype=float)
    return alpha0 * ((alpha0 / y0) ** (1.0 / beta) + C_tilde * t) ** (-beta)


@dataclass
class BihariFit:
    t0: float
    alpha0: float
    C_tilde: float
    beta: int
    dominated: bool
    max_ratio: float


def fit_bihari(times, E, M, t0=1.0, rtol=1e-6):
    """Fit ``C~`` from the differential inequality and check envelope domination on ``t >= t0``.

    ``C~`` is the minimum over the window of ``-E' alpha0^(1/beta) / (beta E^(1+1/beta))``
    (centred differences), i.e. the largest constant for which the sampled
    series satisfies the Bihari differential inequality.
    """
    times, E = _check_series(times, E)
    sel = times >= t0 - 1e-12
    t, y = times[sel], E[sel]
    if len(t) < 3:
        raise ConfigurationError("need at least 3 samples after t0")
    beta = 2 * M - 2
    alpha0 = float(y[0])
    dy = np.gradient(y, t)
    C = -dy * alpha0 ** (1.0 / beta) / (beta * y ** (1.0 + 1.0 / beta))
    C_t = max(float(np.min(C)), 0.0)
    env = bihari_envelope(alpha0, C_t, M, t - t[0])
    ratio = y / env
    return BihariFit(float(t[0]), alpha0, C_t, beta, bool(np.all(ratio <= 1.0 + rtol)),
                     float(ratio.max()))


def _check_series(times, E):
    times = np.asarray(times, dtype=float)
    E = np.asarray(E, dtype=float)
    if times.shape != E.shape or times.ndim != 1:
        raise ConfigurationError("times and values must be 1-d arrays of equal length")
    if np.any(E <= 0) or not np.all(np.isfinite(E)):
        raise ConfigurationError("decay series must be positive and finite")
    return times, E


def decay_fit(times, E, window=None, min_points=5):
    """Least-squares exponent ``beta`` of ``E ~ (1+t)^(-beta)`` on ``window``."""
    times, E = _check_series(times, E)
    if window is not None:
        lo, hi = window
        sel = (times >= lo - 1e-12) & (times <= hi + 1e-12)
        times, E = times[sel], E[sel]
    if len(times) < min_points:
        raise ConfigurationError(f"decay fit needs at least {min_points} points")
    slope, _ = np.polyfit(np.log1p(times), np.log(E), 1)
    return float(-slope)


def local_exponents(times, E):
    """Pointwise ``-d log E / d log(1+t)`` (shows the algebraic-to-exponential crossover)."""
    times, E = _check_series(times, E)
    return -np.gradient(np.log(E), np.log1p(times))


def is_nonincreasing(values, rtol=1e-12):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= rtol * np.abs(v[:-1])))


def coercivity_constant(u, th, grid, params):
    """``D(u, theta) / ||(u, theta)||^2_{H^1}`` for mean-zero ``u``."""
    den = hs_norm_sq_coeffs(u, grid, 1) + hs_norm_sq_coeffs(th, grid, 1)
    if den == 0:
        raise NumericalError("zero fields")
    return dissipation_coeffs(u, th, grid, params) / den


# ---------------------------------------------------------------------------
# Cheap per-snapshot summary


def low_level(Z, params, mode="galerkin", identity=False):
    """Low-level functionals of one snapshot (second-order jets only).

    Returns a flat mapping with ``E_low``, ``E_bar_low``, ``E_tilde_low``,
    ``D``, ``D_low`` and the L^2 / L^inf norms used by the transport bound.
    With ``identity=True`` the instantaneous energy-dissipation identity at
    the low level is evaluated as well (``ed_rate``, ``ed_D``, ``ed_I``,
    ``ed_identity``).
    """
    jets = Jets(Z, params, 2, mode)
    gn, g2 = jets.gn, jets.g2
    u, th, a = jets.u, jets.th, jets.a
    hs = hs_norm_sq_coeffs
    E_bar = _pnorm([u, th, a], [gn, gn, g2], 2)
    row = {
        "E_low": E_bar + hs(a[1], g2, 1) + hs(a[2], g2, 0),
        "E_bar_low": E_bar,
        "E_tilde_low": float(sum(energy_alpha(jets, al) for al in parabolic_indices(2))),
        "D": dissipation_coeffs(u[0], th[0], gn, params),
        "D_low": _pnorm([u, th], [gn, gn], 3) + hs(a[0], g2, 1) + hs(a[1], g2, 0),
    }
    N = gn.phys_size
    row["K_L2"] = _lp(jets.K[0], N, 2)
    row["K_Linf"] = _lp(jets.K[0], N, np.inf)
    row["thbar_L2"] = _lp(th[0][:2], N, 2)
    row["thbar_Linf"] = _lp(th[0][:2], N, np.inf)
    if identity:
        terms = interaction_terms(Z, params, parabolic_indices(2), jets=jets)
        row["ed_rate"] = float(sum(t.rate for t in terms.values()))
        row["ed_D"] = float(sum(t.dissipation for t in terms.values()))
        row["ed_I"] = float(sum(t.total for t in terms.values()))
        row["ed_identity"] = row["ed_rate"] + row["ed_D"] - row["ed_I"]
    return row


def transport_bound_from_series(times, K_lp, thbar_lp, params, p=2, tol=None):
    """Same bound as ``transport_bound_check`` from precomputed norm series."""
    times = np.asarray(times, dtype=float)
    lhs = np.asarray(K_lp, dtype=float)
    th = np.sqrt(2.0) * abs(params.nu - params.lam) * np.asarray(thbar_lp, dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (th[1:] + th[:-1]))])
    rhs = lhs[0] + integral
    if tol is None:
        dt = float(np.max(np.diff(times))) if len(times) > 1 else 0.0
        tol = 1e-10 * max(1.0, lhs[0]) + dt ** 2 * float(np.max(th, initial=0.0)) * max(times[-1], 1.0)
    return TransportReport(p, times, lhs, rhs, tol)
