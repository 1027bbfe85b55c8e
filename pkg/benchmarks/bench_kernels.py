#!/usr/bin/env python3
"""Compare the compiled kernel extension against the numpy fallback.

Times the six hot kernels on vectors of increasing size, then runs one
instrumented interior point solve with each backend to show the end-to-end
difference.  The backend is normally chosen at import time; here both
implementations are loaded explicitly so the comparison runs regardless of
whether the extension was built.
"""

import argparse
import timeit

import numpy as np

from ipstop import _kernels_py
from ipstop import kernels

try:
    from ipstop import _kernels
except ImportError:
    _kernels = None

KERNELS = ("step_to_boundary", "max_abs_ratio", "stepped_dot",
           "axpby_norm", "axpbypcz_norm", "reconstruct_ne")


def make_args(name, n, rng):
    v = rng.uniform(0.5, 2.0, n)
    w = rng.standard_normal(n)
    if name == "step_to_boundary":
        return (v, w)
    if name == "max_abs_ratio":
        return (w, v)
    if name == "stepped_dot":
        return (v, w, 0.7, v + 1.0, -w, 0.3)
    if name == "axpby_norm":
        return (w, 0.7, v)
    if name == "axpbypcz_norm":
        return (w, 0.7, v, -0.2, w + 1.0)
    if name == "reconstruct_ne":
        out1, out2 = np.empty(n), np.empty(n)
        return (w, -w, v, 1.0 / v, w + 0.5, out1, out2)
    raise ValueError(name)


def time_call(fn, args, repeat=5):
    number = 1
    while True:
        t = timeit.timeit(lambda: fn(*args), number=number)
        if t > 0.01:
            break
        number *= 4
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number


def bench_micro(sizes, seed):
    rng = np.random.default_rng(seed)
    print("%-18s %10s %12s %12s %8s"
          % ("kernel", "n", "numpy [us]", "compiled [us]", "speedup"))
    for name in KERNELS:
        for n in sizes:
            args = make_args(name, n, rng)
            t_py = time_call(getattr(_kernels_py, name), args)
            if _kernels is None:
                print("%-18s %10d %12.2f %12s %8s"
                      % (name, n, 1e6 * t_py, "-", "-"))
                continue
            t_c = time_call(getattr(_kernels, name), args)
            print("%-18s %10d %12.2f %12.2f %8.2fx"
                  % (name, n, 1e6 * t_py, 1e6 * t_c, t_py / t_c))


def bench_solve(seed):
    from ipstop import harness

    print("\nend-to-end: tomo level 24, ipstop policy, backend = %s"
          % ("compiled" if kernels.HAVE_COMPILED_KERNELS else "numpy"))
    impls = [("numpy", _kernels_py)]
    if _kernels is not None:
        impls.append(("compiled", _kernels))
    saved = {name: getattr(kernels, name) for name in KERNELS}
    try:
        for label, impl in impls:
            for name in KERNELS:
                setattr(kernels, name, getattr(impl, name))
            t0 = timeit.default_timer()
            record, _, _ = harness.run_one("tomo", "ipstop", seed=seed, level=24)
            dt = timeit.default_timer() - t0
            print("  %-8s  %6.2f s   ipm %2d   inner %5d   converged %s"
                  % (label, dt, record.ipm_iters, record.inner_total,
                     record.converged))
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,100000",
                    help="comma separated vector lengths")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-solve", action="store_true")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    if _kernels is None:
        print("compiled extension not built; timing the fallback only\n")
    bench_micro(sizes, args.seed)
    if not args.skip_solve:
        bench_solve(args.seed)


if __name__ == "__main__":
    main()
