"""Acceptance criteria C1-C9.

Each test records one PASS/FAIL line through the ``accept`` fixture; the
lines are repeated in the terminal summary.  Assertions use the criterion
tolerances unchanged, so a criterion that is not met fails here.
"""

import time

import numpy as np
import pytest

from micropolar import diagnostics as dg
from micropolar import rigidity as rg
from micropolar.core import (
    PhysParams,
    commutator,
    commutator_block_form,
    frob,
    get_engine,
    matmul,
    sym,
    ten,
    vc,
)
from micropolar.fields import (
    Grid,
    coeffs_to_physical,
    convolve_direct,
    dealias_size,
    dealiased_product,
    inner,
    leray_coeffs,
    leray_project,
    norm,
    project_modes,
    random_field,
    to_physical,
)
from micropolar.galerkin import GalerkinConfig, TnOperator, apply_Tn, initial_data, invert_Tn, simulate
from micropolar.spectrum import eigen_scan, propagate_mode

OBLATE = PhysParams.unit(1.0, 2.0)
OBLONG = PhysParams.unit(2.0, 1.0)


def _rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


# ---------------------------------------------------------------------------
# C1 exact algebra


def test_c1_algebraic_identities(accept):
    rng = np.random.default_rng(1)
    n = 1000
    t0 = time.perf_counter()
    A = ten(rng.standard_normal((3, n)))
    B = rng.standard_normal((3, 3, n))
    S = 0.5 * (B + B.swapaxes(0, 1))
    w = rng.standard_normal((3, n))
    J = sym(rng.standard_normal((3, 3, n)))
    a = rng.standard_normal((3, n))
    x = rng.standard_normal((3, n))
    errs = {
        "half_commutator": np.abs(0.5 * commutator(A, S) - sym(matmul(A, S))).max(),
        "skew_orthogonality": np.abs(frob(commutator(A, S), S)).max() / np.abs(S).max() ** 2,
        "block_form": np.abs(commutator_block_form(w, J) - commutator(ten(w), J)).max(),
        "ten_vc": max(np.abs(vc(ten(a)) - a).max(),
                      np.abs(np.einsum("ij...,j...->i...", ten(a), x) - np.cross(a, x, axis=0)).max()),
    }
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    ok = worst <= 1e-12 and elapsed < 1.0
    accept("C1", ok, f"max error {worst:.2e} over {n} instances each, {elapsed:.3f} s")
    assert worst <= 1e-12, errs
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# C2 spectral plumbing


def test_c2_spectral_plumbing(accept):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    errs = {}

    g = Grid(4, 16)
    f, h = random_field(g, "vector", rng), random_field(g, "vector", rng)
    Pf = project_modes(f, 2)
    errs["projection_idempotent"] = _rel(project_modes(Pf, 2).coeffs, Pf.coeffs)
    errs["projection_self_adjoint"] = abs(inner(Pf, h) - inner(f, project_modes(h, 2))) / abs(inner(f, h))

    v = leray_project(f)
    div = np.einsum("i...,i...->...", g.wavenumbers, v.coeffs)
    errs["leray_divergence"] = float(np.abs(div).max() / (np.abs(g.wavenumbers).max() * np.abs(v.coeffs).max()))
    phi = random_field(g, "scalar", rng)
    grad = 1j * g.wavenumbers * phi.coeffs
    errs["leray_gradient_kill"] = float(np.abs(leray_coeffs(grad, g)).max() / np.abs(grad).max())

    x = to_physical(f)
    errs["parseval"] = abs(np.mean(np.sum(x ** 2, axis=0)) - norm(f) ** 2) / norm(f) ** 2

    n = 2
    gp = Grid(n, dealias_size(n, n, 2 * n))
    p, q = random_field(gp, "scalar", rng), random_field(gp, "scalar", rng)
    errs["dealiased_vs_direct"] = _rel(dealiased_product(p, q, 2 * n).coeffs,
                                       convolve_direct(p.coeffs, q.coeffs, 2 * n))

    # cutoff: for f on band n only the band-2n part of g reaches band n of f g
    N = max(dealias_size(n, 4 * n, n), 8 * n + 1)
    fn = random_field(Grid(n, N), "scalar", rng)
    gw = random_field(Grid(4 * n, N), "scalar", rng)
    lhs = dealiased_product(fn, gw, n).coeffs
    rhs = dealiased_product(fn, project_modes(gw, 2 * n), n).coeffs
    errs["band_cutoff"] = _rel(lhs, rhs)

    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    ok = worst <= 1e-10 and elapsed < 10.0
    accept("C2", ok, f"max error {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-10, errs
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# C3 T_n(K) inversion


def test_c3_tn_inversion(accept):
    rng = np.random.default_rng(3)
    n, lam = 8, OBLATE.lam
    eng = get_engine(n, OBLATE)
    t0 = time.perf_counter()
    K = random_field(eng.grid_2n, "sym", rng)
    Kp = coeffs_to_physical(K.coeffs, eng.N)
    K = K.with_coeffs(K.coeffs * (0.4 * lam / np.sqrt((Kp ** 2).sum(axis=(0, 1))).max()))
    op = TnOperator(K, n, OBLATE)
    K_inf = float(np.sqrt((op.K_physical() ** 2).sum(axis=(0, 1))).max())
    roundtrip, ratio = 0.0, 0.0
    for _ in range(50):
        f = random_field(eng.grid_n, "vector", rng)
        f = f.with_coeffs(f.coeffs / norm(f))
        v = invert_Tn(op, f, tol=1e-12)
        roundtrip = max(roundtrip, norm(apply_Tn(op, v).with_coeffs(apply_Tn(op, v).coeffs - f.coeffs)))
        ratio = max(ratio, norm(v))
    elapsed = time.perf_counter() - t0
    bound = 2.0 / lam + 1e-6
    ok = roundtrip <= 1e-9 and ratio <= bound and elapsed < 30.0
    accept("C3", ok, f"||K||_inf = {K_inf:.3f}, roundtrip {roundtrip:.2e}, "
                     f"max ||T^-1 f|| = {ratio:.4f} (bound {bound:.4f}), {elapsed:.1f} s")
    assert abs(K_inf - 0.4 * lam) < 1e-12
    assert roundtrip <= 1e-9
    assert ratio <= bound
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# C4 energy-dissipation residual

C4_DTS = (8e-3, 4e-3, 2e-3, 1e-3)
# the stiff initial layer (rates ~ 2e3) is unresolved for every dt above;
# its windows are reported, the criterion is evaluated after it
C4_LAYER = (0.008, 0.016, 0.024)
C4_CENTERS = (0.1, 0.15, 0.2)


@pytest.mark.slow
def test_c4_ed_residual_convergence(accept):
    maxima, layer = [], []
    for dt in C4_DTS:
        cfg = GalerkinConfig(n=8, dt=dt, t_end=1.0, stepper="if-rk4")
        Z0 = initial_data("random-band", 1e-3, 0, OBLATE, cfg)
        rs = dg.windowed_ed_residual(Z0, OBLATE, cfg, C4_LAYER + C4_CENTERS)
        late = rs.times > C4_LAYER[-1] + dt / 2
        maxima.append(float(np.abs(rs.residual[late]).max()))
        layer.append(float(np.abs(rs.residual[~late]).max()))
    slope = float(np.polyfit(np.log(C4_DTS), np.log(maxima), 1)[0])
    layer_slope = float(np.polyfit(np.log(C4_DTS), np.log(layer), 1)[0])
    ok_slope = abs(slope - 2.0) <= 0.3
    ok_abs = maxima[-1] <= 1e-6
    accept("C4", ok_slope and ok_abs,
           f"max |r| on t in {list(C4_CENTERS)}: {', '.join(f'{m:.2e}' for m in maxima)} "
           f"at dt = {list(C4_DTS)}; slope {slope:.2f}; max at dt=1e-3 {maxima[-1]:.2e}. "
           f"Initial layer (t <= {C4_LAYER[-1]}): {', '.join(f'{m:.2e}' for m in layer)}, "
           f"slope {layer_slope:.2f}")
    assert ok_slope
    assert ok_abs


# ---------------------------------------------------------------------------
# C5 linear stability dichotomy


@pytest.mark.slow
def test_c5_stability_dichotomy(accept):
    t0 = time.perf_counter()
    ob = eigen_scan(OBLATE, 16)
    ol = eigen_scan(OBLONG, 16)
    elapsed = time.perf_counter() - t0
    flat = abs(ob.tracked_re[-1]) / abs(ob.tracked_re[0])
    ok = ob.max_re <= 1e-10 and ol.max_re > 1e-3 and flat < 0.1 and elapsed < 60.0
    accept("C5", ok, f"oblate max Re {ob.max_re:.2e}; oblong witness k = 2pi*{list(ol.argmax_k)} "
                     f"Re {ol.max_re:.3e}; tracked |Re| ratio shell 16/1 = {flat:.3e}; {elapsed:.1f} s")
    assert ob.max_re <= 1e-10
    assert ol.max_re > 1e-3
    assert flat < 0.1
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# C8 linear solver consistency


def test_c8_single_mode_vs_symbol(accept):
    rng = np.random.default_rng(8)
    n = 1
    cfg = GalerkinConfig(n=n, dt=2e-3, t_end=1.0, stepper="rk4")
    modes = set()
    while len(modes) < 5:
        m = tuple(int(x) for x in rng.integers(-n, n + 1, 3))
        if m != (0, 0, 0) and tuple(-x for x in m) not in modes:
            modes.add(m)
    t0 = time.perf_counter()
    errs = []
    for mode in sorted(modes):
        Z0 = initial_data("single-mode", 1e-6, int(rng.integers(1 << 16)), OBLATE, cfg, mode=mode)
        i = tuple(x + n for x in mode)
        j = tuple(x + 2 * n for x in mode)

        def vec(Z):
            return np.concatenate([Z.u.coeffs[(slice(None),) + i], Z.theta.coeffs[(slice(None),) + i],
                                   Z.K.coeffs[(slice(0, 2), 2) + j]])

        Z1 = simulate(Z0, OBLATE, cfg, keep=False).states[-1]
        ref = propagate_mode(2 * np.pi * np.array(mode, float), OBLATE, vec(Z0), 1.0)
        errs.append(float(np.linalg.norm(vec(Z1) - ref) / np.linalg.norm(ref)))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-4 and elapsed < 60.0
    accept("C8", ok, f"modes {sorted(modes)}: max rel. error {max(errs):.2e} at t=1, {elapsed:.1f} s")
    assert max(errs) <= 1e-4
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# C6, C7, C9 share one oblate run


@pytest.fixture(scope="module")
def oblate_run():
    cfg = GalerkinConfig(n=8, dt=0.05, t_end=20.0, stepper="if-rk4", snapshot_every=5)
    Z0 = initial_data("random-band", 1e-3, 0, OBLATE, cfg)
    rows = []

    def record(t, Z):
        row = dg.low_level(Z, OBLATE)
        row["t"] = t
        if t <= 5.0 + 1e-9:
            row["deviation"] = rg.spectrum_persistence_check(Z.J_physical(OBLATE), OBLATE)
            row["rigidity"] = rg.rigidity_check_state(Z, OBLATE, tol=1e-10)
        rows.append(row)

    simulate(Z0, OBLATE, cfg, callback=record, keep=False)
    return rows


@pytest.mark.slow
def test_c6_persistence_and_rigidity(accept, oblate_run):
    early = [r for r in oblate_run if "deviation" in r]
    dev = max(r["deviation"] for r in early)
    applicable = [r["rigidity"] for r in early if r["rigidity"].applicable]
    viol = sum(rep.violations for rep in applicable)
    margin = min(rep.margin for rep in applicable) if applicable else float("nan")
    ok = dev <= 1e-6 and viol == 0
    accept("C6", ok, f"max spectrum deviation {dev:.2e} on t <= 5; rigidity applicable at "
                     f"{len(applicable)}/{len(early)} snapshots, violations {viol}, "
                     f"min 2|a| - |K| = {margin:.2e}")
    assert dev <= 1e-6
    assert viol == 0


@pytest.mark.slow
def test_c7_decay(accept, oblate_run):
    t = np.array([r["t"] for r in oblate_run])
    E = np.array([r["E_low"] for r in oblate_run])
    late = t >= 1.0 - 1e-12
    mono = dg.is_nonincreasing(E[late])
    beta = dg.decay_fit(t, E, (1.0, 20.0))
    fit = dg.fit_bihari(t, E, 4, t0=1.0)
    ok = mono and beta >= 2.0 and fit.dominated
    accept("C7", ok, f"monotone after t=1: {mono}; fitted exponent {beta:.4f} (>= 2 required); "
                     f"Bihari C~ = {fit.C_tilde:.3e}, dominated {fit.dominated}")
    assert mono
    assert fit.dominated
    assert beta >= 2.0


@pytest.mark.slow
def test_c9_transport_bounds(accept, oblate_run):
    t = np.array([r["t"] for r in oblate_run])
    rep = dg.transport_bound_from_series(t, [r["K_L2"] for r in oblate_run],
                                         [r["thbar_L2"] for r in oblate_run], OBLATE)

    # pure rotation (exact flow) and rotation with frozen divergence-free advection
    rng = np.random.default_rng(9)
    g2 = Grid(4, 16)
    S = random_field(g2, "sym", rng)
    n0 = norm(S)
    rot = max(abs(norm(S.with_coeffs(dg.rotate_K(S.coeffs, OBLATE, s))) - n0) / n0
              for s in np.linspace(0.0, 10.0, 41))
    u = leray_project(random_field(Grid(2, 16), "vector", rng))
    u = u.with_coeffs(0.05 * u.coeffs / norm(u))
    steps = dg.advect_rotate(S, u, OBLATE, 1e-3, 1000)
    adv = max(abs(norm(S.with_coeffs(c)) - n0) / n0 for c in steps)
    cons = max(rot, adv)
    ok = rep.holds and cons <= 1e-10
    accept("C9", ok, f"L2 transport bound holds at {int(np.sum(rep.lhs <= rep.rhs + rep.tol))}/"
                     f"{len(t)} snapshots (margin {rep.margin:.2e}); rotation L2 drift {rot:.1e}, "
                     f"with advection {adv:.1e}")
    assert rep.holds
    assert cons <= 1e-10
