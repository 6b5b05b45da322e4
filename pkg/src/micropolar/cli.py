"""Command line entry point: ``micropolar run | verify | scan | report``.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical failure, 4 blow-up guard.
"""

from __future__ import annotations

import os
import sys
import time as _time

import click
import numpy as np

from . import diagnostics as dg
from . import rigidity as rg
from .errors import BlowUpError, ConfigurationError, MicropolarError, NumericalError
from .fields import coeffs_to_physical, hermitian_defect, set_fft_workers
from .galerkin import initial_data, simulate
from .spectrum import classify_stability, eigen_scan
from .storage import (
    load_scenario,
    load_state,
    read_json,
    read_manifest,
    read_table,
    save_state,
    snapshot_name,
    write_json,
    write_manifest,
    write_table,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BLOWUP = 0, 1, 2, 3, 4
THREADS_ENV = "MICROPOLAR_THREADS"

# thresholds used by ``verify``
TOL = {
    "ed_identity": 1e-8,       # relative to the summed dissipation
    "persistence": 1e-6,
    "rigidity": 1e-10,
    "symmetry": 1e-12,
    "bands": 1e-12,
    "decay_exponent": 2.0,
    "ed_residual": 5e-2,       # centered residual / dissipation at the window centre
}
ED_DT = 1e-3
ED_TIMES = (0.008, 0.016, 0.024)


# ---------------------------------------------------------------------------
# Workflows (usable without the command line)


def configure_threads(threads=None):
    n = threads if threads is not None else os.environ.get(THREADS_ENV)
    if n is None:
        return None
    try:
        n = int(n)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer") from None
    set_fft_workers(n)
    return n


def run_simulation(sc, out, fmt="csv", log=print):
    """Integrate a ``simulate`` scenario, writing snapshots, tables, summary and plots."""
    cfg, params = sc.galerkin, sc.params
    ini = dict(sc.initial)
    kind = ini.pop("kind", "random-band")
    amp = float(ini.pop("amplitude", 0.0))
    if "mode" in ini and ini["mode"] is not None:
        ini["mode"] = tuple(ini["mode"])
    Z0, irep = initial_data(kind, amp, sc.seed or 0, params, cfg, return_report=True, **ini)
    os.makedirs(os.path.join(out, "snapshots"), exist_ok=True)
    identity = "ed_identity" in sc.checks
    entries, rows = [], []
    t_start = _time.time()

    def on_snapshot(t, Z):
        i = len(entries)
        name = os.path.join("snapshots", snapshot_name(i))
        save_state(os.path.join(out, name), Z, t, params)
        entries.append({"index": i, "time": t, "file": name})
        row = {"time": t}
        row.update(dg.low_level(Z, params, identity=identity))
        J = Z.J_physical(params)
        row["spectrum_deviation"] = rg.spectrum_persistence_check(J, params)
        rr = rg.rigidity_check(J - params.J_eq.reshape(3, 3, 1, 1, 1), params, TOL["rigidity"])
        row["rigidity_applicable"] = int(rr.applicable)
        row["rigidity_margin"] = rr.margin
        row["rigidity_violations"] = rr.violations
        rows.append(row)
        log(f"t = {t:8.4f}  E_low = {row['E_low']:.6e}  D_low = {row['D_low']:.6e}")

    failure = None
    try:
        simulate(Z0, params, cfg, callback=on_snapshot, keep=False)
    except BlowUpError as exc:
        failure = exc
    write_table(os.path.join(out, f"diagnostics.{fmt}"), rows, fmt)
    summary = summarize_run(sc, rows, irep)
    if "ed_residual" in sc.checks and failure is None:
        summary["ed_residual"] = residual_windows(sc, Z0)
    summary["wall_time"] = _time.time() - t_start
    if failure is not None:
        summary["blowup"] = {"message": str(failure), "time": failure.time, "value": failure.value}
    write_manifest(out, sc, entries, {"diagnostics": f"diagnostics.{fmt}"})
    write_json(os.path.join(out, "summary.json"), summary)
    if entries:
        try:
            reports = full_reports(sc, out, entries)
            if reports:
                write_json(os.path.join(out, "energy_reports.json"), [r.to_dict() for r in reports])
        except MicropolarError as exc:
            summary["energy_report_error"] = str(exc)
            write_json(os.path.join(out, "summary.json"), summary)
    plot_energy(os.path.join(out, "energy.png"), rows, summary)
    if failure is not None:
        raise failure
    return summary


def residual_windows(sc, Z0):
    """Low-level centered ED residual on short dense windows near the start of the run."""
    from dataclasses import replace

    dt = float(sc.diagnostics.get("ed_dt", ED_DT))
    centers = [float(c) for c in sc.diagnostics.get("ed_times", ED_TIMES)]
    rs = dg.windowed_ed_residual(Z0, sc.params, replace(sc.galerkin, dt=dt), centers)
    diss = np.array([abs(b.dissipation) for b in rs.budgets])
    rel = np.where(diss > 0, np.abs(rs.residual) / np.where(diss > 0, diss, 1.0), np.abs(rs.residual))
    return {"dt": dt, "times": rs.times, "residual": rs.residual, "dissipation": diss,
            "max_abs": rs.max, "max_relative": float(rel.max())}


def full_reports(sc, out, entries):
    """Full ``EnergyReport`` at the first and last snapshot (and every ``full_report_every``)."""
    every = int(sc.diagnostics.get("full_report_every", 0) or 0)
    idx = {0, len(entries) - 1}
    if every > 0:
        idx |= set(range(0, len(entries), every))
    M = int(sc.diagnostics.get("M", 4))
    j_max = int(sc.diagnostics.get("j_max", dg.DEFAULT_J_MAX))
    out_reports = []
    for i in sorted(idx):
        Z, t, _ = load_state(os.path.join(out, entries[i]["file"]))
        out_reports.append(dg.energy_report(Z, sc.params, M=M, j_max=j_max, time=t, mode="galerkin"))
    return out_reports


def summarize_run(sc, rows, irep):
    params = sc.params
    t = np.array([r["time"] for r in rows])
    s = {"scenario": sc.name, "n_snapshots": len(rows),
         "initial_data": {"kind": irep.kind, "amplitude": irep.amplitude, "seed": irep.seed,
                          "K_inf": irep.K_inf,
                          "spectrum_deviation_pre": irep.spectrum_deviation_pre,
                          "spectrum_deviation_post": irep.spectrum_deviation_post}}
    if not rows:
        return s
    s["persistence_max_deviation"] = max(r["spectrum_deviation"] for r in rows)
    s["rigidity_violations"] = int(sum(r["rigidity_violations"] for r in rows))
    s["rigidity_min_margin"] = min(r["rigidity_margin"] for r in rows if r["rigidity_applicable"]) \
        if any(r["rigidity_applicable"] for r in rows) else None
    if len(rows) > 1:
        tb = dg.transport_bound_from_series(t, [r["K_L2"] for r in rows], [r["thbar_L2"] for r in rows], params)
        s["transport_L2"] = {"holds": tb.holds, "margin": tb.margin, "tol": tb.tol}
    if "ed_identity" in rows[0]:
        scale = max(max(abs(r["ed_D"]), abs(r["ed_rate"])) for r in rows)
        worst = max(abs(r["ed_identity"]) for r in rows)
        s["ed_identity"] = {"max_abs": worst, "scale": scale,
                            "relative": worst / scale if scale > 0 else 0.0}
    E = np.array([r["E_low"] for r in rows])
    win = sc.diagnostics.get("decay_window")
    M = int(sc.diagnostics.get("M", 4))
    if np.all(E > 0) and win is not None:
        lo, hi = win
        sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        s["decay"] = {"window": [lo, hi], "monotone_after_t0": dg.is_nonincreasing(E[sel]),
                      "target_exponent": 2 * M - 2}
        try:
            s["decay"]["beta_hat"] = dg.decay_fit(t, E, window=(lo, hi))
            loc = dg.local_exponents(t[sel], E[sel])
            s["decay"]["local_exponent_first"] = float(loc[0])
            s["decay"]["local_exponent_last"] = float(loc[-1])
        except ConfigurationError as exc:
            s["decay"]["error"] = str(exc)
        t0 = float(sc.diagnostics.get("bihari_t0", lo))
        try:
            bf = dg.fit_bihari(t, E, M, t0=t0)
            s["bihari"] = {"t0": bf.t0, "alpha0": bf.alpha0, "C_tilde": bf.C_tilde, "beta": bf.beta,
                           "dominated": bf.dominated, "max_ratio": bf.max_ratio}
        except ConfigurationError as exc:
            s["bihari"] = {"error": str(exc)}
    return s


def run_scan(sc, out, fmt="csv", log=print):
    k_max = int(sc.scan.get("k_max", 16))
    tol = float(sc.scan.get("tol", 1e-10))
    sp = eigen_scan(sc.params, k_max)
    verdict = classify_stability(sc.params, k_max, tol, spectrum=sp)
    os.makedirs(out, exist_ok=True)
    write_table(os.path.join(out, f"spectrum.{fmt}"), sp.rows(), fmt)
    summary = sp.summary()
    summary.update({"scenario": sc.name, "stable": verdict.stable, "verdict_text": verdict.text,
                    "witness_k": list(verdict.witness) if verdict.witness else None,
                    "consistent_with_inertia": verdict.consistent_with_inertia,
                    "tracked_re": sp.tracked_re.tolist(), "shells": sp.shells.tolist(),
                    "nu_minus_lambda": sc.params.nu - sc.params.lam})
    write_json(os.path.join(out, "verdict.json"), summary)
    write_manifest(out, sc, [], {"spectrum": f"spectrum.{fmt}"})
    plot_spectrum(os.path.join(out, "spectrum.png"), sp)
    log(verdict.text)
    return summary


# ---------------------------------------------------------------------------
# Verification


def _check(name, passed, value, threshold, **info):
    d = {"check": name, "passed": bool(passed), "value": value, "threshold": threshold}
    d.update(info)
    return d


def verify_run(sc, out):
    """Re-evaluate the enabled checks from stored artifacts."""
    man = read_manifest(out)
    results = []
    if sc.kind == "scan":
        path = os.path.join(out, "verdict.json")
        if not os.path.exists(path):
            raise ConfigurationError(f"{out}: missing verdict.json")
        v = read_json(path)
        if "stability" in sc.checks:
            oblate = sc.params.nu > sc.params.lam
            ok = (v["stable"] is True) if oblate else (v["stable"] is False and v["max_re"] > 1e-3)
            results.append(_check("stability", ok, v["max_re"], 1e-10 if oblate else 1e-3,
                                  witness_k=v.get("witness_k"), expected="stable" if oblate else "unstable"))
        return results
    entries = man["snapshots"]
    if not entries:
        raise ConfigurationError(f"{out}: manifest lists no snapshots")
    params = sc.params
    states = []
    for e in entries:
        path = os.path.join(out, e["file"])
        if not os.path.exists(path):
            raise ConfigurationError(f"missing snapshot {path}")
        Z, t, _ = load_state(path)
        states.append((t, Z))
    if "symmetry" in sc.checks:
        worst, where = 0.0, None
        for t, Z in states:
            c = Z.K.coeffs
            d = np.abs(c - c.swapaxes(0, 1))
            h = max(hermitian_defect(Z.u.coeffs), hermitian_defect(Z.theta.coeffs), hermitian_defect(c))
            m = float(d.max())
            if max(m, h) > worst:
                worst = max(m, h)
                idx = np.unravel_index(int(np.argmax(d)), d.shape)
                where = {"time": t, "entry": [int(idx[0]), int(idx[1])],
                         "mode": [int(i) - Z.K.grid.n_modes for i in idx[2:]],
                         "kind": "K symmetry" if m >= h else "hermitian"}
        results.append(_check("symmetry", worst <= TOL["symmetry"], worst, TOL["symmetry"], location=where))
    if "bands" in sc.checks:
        worst, where = 0.0, None
        for t, Z in states:
            g = Z.grid_n
            div = np.abs(np.einsum("i...,i...->...", g.wavenumbers, Z.u.coeffs)).max()
            div /= max(float(np.sqrt(g.k2.max())), 1.0)
            outside = max(np.abs(Z.u.coeffs * ~g.mask()).max(), np.abs(Z.theta.coeffs * ~g.mask()).max(),
                          np.abs(Z.K.coeffs * ~Z.grid_2n.mask()).max())
            mean = np.abs(Z.u.coeffs[:, g.n_modes, g.n_modes, g.n_modes]).max()
            v = float(max(div, outside, mean))
            if v > worst:
                worst, where = v, {"time": t}
        results.append(_check("bands", worst <= TOL["bands"], worst, TOL["bands"], location=where))
    if "persistence" in sc.checks:
        dev = max(rg.spectrum_persistence_check(Z.J_physical(params), params) for _, Z in states)
        results.append(_check("persistence", dev <= TOL["persistence"], dev, TOL["persistence"]))
    if "rigidity" in sc.checks:
        viol, margin = 0, np.inf
        for _, Z in states:
            K = coeffs_to_physical(Z.K.coeffs, Z.K.grid.phys_size)
            rr = rg.rigidity_check(K, params, TOL["rigidity"])
            if rr.applicable:
                viol += rr.violations
                margin = min(margin, rr.margin)
        results.append(_check("rigidity", viol == 0, viol, 0, min_margin=float(margin)))
    rows = read_table(os.path.join(out, man.get("diagnostics", "diagnostics.csv"))) \
        if man.get("diagnostics", "").endswith(".csv") else read_json(os.path.join(out, man["diagnostics"]))
    if "transport" in sc.checks and len(states) > 1:
        from .diagnostics import _lp

        t = [s[0] for s in states]
        N = states[0][1].grid_n.phys_size
        tb = dg.transport_bound_from_series(t, [_lp(Z.K.coeffs, N, 2) for _, Z in states],
                                            [_lp(Z.theta.coeffs[:2], N, 2) for _, Z in states], params)
        results.append(_check("transport", tb.holds, tb.margin, 0.0, tol=tb.tol))
    if "ed_identity" in sc.checks:
        if rows and "ed_identity" in rows[0]:
            scale = max(max(abs(r["ed_D"]), abs(r["ed_rate"])) for r in rows)
            worst = max(abs(r["ed_identity"]) for r in rows)
            rel = worst / scale if scale > 0 else worst
            results.append(_check("ed_identity", rel <= TOL["ed_identity"], rel, TOL["ed_identity"]))
        else:
            results.append(_check("ed_identity", False, None, TOL["ed_identity"], error="no identity columns"))
    summary = read_json(os.path.join(out, "summary.json"))
    if "ed_residual" in sc.checks:
        e = summary.get("ed_residual")
        if e is None:
            results.append(_check("ed_residual", False, None, TOL["ed_residual"], error="not computed"))
        else:
            results.append(_check("ed_residual", e["max_relative"] <= TOL["ed_residual"], e["max_relative"],
                                  TOL["ed_residual"], max_abs=e["max_abs"], dt=e["dt"]))
    if "decay" in sc.checks:
        d = summary.get("decay", {})
        results.append(_check("decay_monotone", bool(d.get("monotone_after_t0")), d.get("monotone_after_t0"), True))
        b = d.get("beta_hat")
        results.append(_check("decay_exponent", b is not None and b >= TOL["decay_exponent"], b,
                              TOL["decay_exponent"], target=d.get("target_exponent")))
    if "bihari" in sc.checks:
        b = summary.get("bihari", {})
        results.append(_check("bihari", bool(b.get("dominated")), b.get("max_ratio"), 1.0,
                              C_tilde=b.get("C_tilde")))
    return results


# ---------------------------------------------------------------------------
# Plots


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_energy(path, rows, summary):
    t = np.array([r["time"] for r in rows])
    E = np.array([r["E_low"] for r in rows])
    sel = (t > 0) & (E > 0)
    if sel.sum() < 2:
        return
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(t[sel], E[sel], "-", label="E_low")
    b = summary.get("bihari", {})
    if "C_tilde" in b:
        from .diagnostics import bihari_envelope

        tt = t[t >= b["t0"]]
        ax.loglog(tt, bihari_envelope(b["alpha0"], b["C_tilde"], b["beta"] // 2 + 1, tt - b["t0"]), "--",
                  label=f"Bihari envelope (C = {b['C_tilde']:.2e})")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectrum(path, sp):
    plt = _plt()
    ev = sp.eigenvalues[np.isfinite(sp.eigenvalues)]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(ev.real, ev.imag, s=1, alpha=0.3)
    C = sp.im_bound
    lo = min(float(ev.real.min()), -1.0)
    ax.axvspan(lo, 0.0, ymin=0.0, ymax=1.0, alpha=0.05, color="green")
    ax.axhline(C, ls=":", color="k")
    ax.axhline(-C, ls=":", color="k")
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xscale("symlog", linthresh=1e-6)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(f"symbol spectrum, k_max = {sp.k_max}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Command line


def _exit_code(exc):
    if isinstance(exc, BlowUpError):
        return EXIT_BLOWUP
    if isinstance(exc, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def _guard(fn):
    try:
        return fn()
    except MicropolarError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code(exc))


scenario_opt = click.option("--scenario", required=True, help="Scenario file or bundled scenario name.")
out_opt = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                       help="Output directory (default: runs/<scenario name>).")
seed_opt = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Override the scenario seed.")
threads_opt = click.option("--threads", type=click.IntRange(1, None), default=None,
                           help=f"FFT worker threads (overrides ${THREADS_ENV}).")
format_opt = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                          help="Table format.")


@click.group()
def main():
    """Micropolar Fourier-Galerkin simulator and diagnostics."""


def _out(sc, out):
    return out or os.path.join("runs", sc.name)


@main.command()
@scenario_opt
@out_opt
@seed_opt
@threads_opt
@format_opt
def run(scenario, out, seed, threads, fmt):
    """Run a scenario (simulation or symbol scan) and write its artifacts."""
    def go():
        configure_threads(threads)
        sc = load_scenario(scenario, seed)
        o = _out(sc, out)
        os.makedirs(o, exist_ok=True)
        if sc.kind == "scan":
            run_scan(sc, o, fmt, log=click.echo)
        else:
            run_simulation(sc, o, fmt, log=click.echo)
        click.echo(f"artifacts written to {o}")
    _guard(go)


@main.command()
@scenario_opt
@out_opt
@seed_opt
@threads_opt
@format_opt
def scan(scenario, out, seed, threads, fmt):
    """Eigenvalue scan of the linearised symbol for the scenario parameters."""
    def go():
        configure_threads(threads)
        sc = load_scenario(scenario, seed)
        o = _out(sc, out)
        run_scan(sc, o, fmt, log=click.echo)
    _guard(go)


@main.command()
@scenario_opt
@out_opt
@seed_opt
@threads_opt
@format_opt
def verify(scenario, out, seed, threads, fmt):
    """Evaluate the scenario checks against stored artifacts (exit 1 on failure)."""
    def go():
        configure_threads(threads)
        sc = load_scenario(scenario, seed)
        o = _out(sc, out)
        res = verify_run(sc, o)
        passed = all(r["passed"] for r in res)
        write_json(os.path.join(o, "verify.json"), {"passed": passed, "checks": res})
        for r in res:
            click.echo(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']}: value={r['value']} threshold={r['threshold']}")
        if not passed:
            sys.exit(EXIT_FAIL)
    _guard(go)


@main.command()
@scenario_opt
@out_opt
@seed_opt
@threads_opt
@format_opt
def report(scenario, out, seed, threads, fmt):
    """Full energy reports for every stored snapshot."""
    def go():
        configure_threads(threads)
        sc = load_scenario(scenario, seed)
        o = _out(sc, out)
        man = read_manifest(o)
        if sc.kind != "simulate":
            raise ConfigurationError("report needs a simulation scenario")
        M = int(sc.diagnostics.get("M", 4))
        j_max = int(sc.diagnostics.get("j_max", dg.DEFAULT_J_MAX))
        rows = []
        for e in man["snapshots"]:
            Z, t, _ = load_state(os.path.join(o, e["file"]))
            r = dg.energy_report(Z, sc.params, M=M, j_max=j_max, time=t, mode="galerkin")
            rows.append(r.row())
        write_table(os.path.join(o, f"report.{fmt}"), rows, fmt)
        click.echo(f"{len(rows)} reports written to {os.path.join(o, f'report.{fmt}')}")
    _guard(go)


if __name__ == "__main__":
    main()
