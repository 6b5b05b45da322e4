"""Compare the compiled pointwise kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--points N] [--repeat R]

Each kernel is timed on both backends over the same random input, the
results are checked for agreement, and one line per kernel is printed.
An end-to-end Galerkin step timing is reported for both backends as well.
"""

import argparse
import timeit

import numpy as np

from micropolar import _kernels_py, kernels


def _inputs(n, rng):
    A = rng.standard_normal((3, 3, n))
    S = 0.5 * (A + A.swapaxes(0, 1)) + 4.0 * np.eye(3)[:, :, None]
    return {
        "A": A,
        "B": rng.standard_normal((3, 3, n)),
        "S": S,
        "v": rng.standard_normal((3, n)),
        "w": rng.standard_normal((3, n)),
        "grad": rng.standard_normal((6, 3, n)),
    }


CASES = {
    "matvec": lambda x, b: kernels.matvec(x["A"], x["v"], backend=b),
    "matmat": lambda x, b: kernels.matmat(x["A"], x["B"], backend=b),
    "cross": lambda x, b: kernels.cross(x["v"], x["w"], backend=b),
    "advect": lambda x, b: kernels.advect(x["v"], x["grad"], backend=b),
    "commutator_ten": lambda x, b: kernels.commutator_ten(x["w"], x["S"], backend=b),
    "sym_solve": lambda x, b: kernels.sym_solve(x["S"], x["v"], backend=b),
    "sym_eigvalsh": lambda x, b: kernels.sym_eigvalsh(x["S"], backend=b),
}


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(points, repeat, rng):
    x = _inputs(points, rng)
    fast = None if kernels.BACKEND == "cython" else _kernels_py
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}; {points} points, best of {repeat}")
    print(f"{'kernel':16s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in CASES.items():
        ref = fn(x, _kernels_py)
        out = fn(x, fast)
        tp = _best(lambda: fn(x, _kernels_py), repeat)
        tc = _best(lambda: fn(x, fast), repeat)
        diff = float(np.abs(out - ref).max())
        print(f"{name:16s} {1e3 * tp:12.3f} {1e3 * tc:12.3f} {tp / tc:8.2f} {diff:10.1e}")


def bench_step(n, repeat):
    from micropolar.core import PhysParams
    from micropolar.galerkin import GalerkinConfig, Stepper, initial_data

    p = PhysParams.unit()
    cfg = GalerkinConfig(n=n, dt=0.05, t_end=0.05, stepper="if-rk4")
    y = initial_data("random-band", 1e-3, 0, p, cfg).arrays()
    st = Stepper(p, cfg)
    st.step(y, cfg.dt)
    saved = kernels._backend
    times = {}
    for label, backend in (("python", _kernels_py), ("cython", saved)):
        kernels._backend = backend
        try:
            times[label] = _best(lambda: st.step(y, cfg.dt), repeat)
        finally:
            kernels._backend = saved
    print(f"if-rk4 step at n={n}: python {times['python']:.3f} s, cython {times['cython']:.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=45 ** 3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--step-n", type=int, default=4)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    bench_kernels(args.points, args.repeat, rng)
    bench_step(args.step_n, max(1, args.repeat // 2))


if __name__ == "__main__":
    main()
