"""Command line interface.

Subcommands: ``gen`` writes a problem bundle, ``solve`` runs one instance
under one policy, ``bench`` crosses seeds with policies and aggregates,
``trace`` records per-inner-iteration indicator series.  The exit code is 0
only if every run converged.
"""

import argparse
import os
import sys

from . import harness, problems
from .errors import IpstopError
from .ipm import write_stats_csv


def _add_size_args(p):
    p.add_argument("--family", required=True, choices=problems.FAMILIES)
    p.add_argument("--level", type=int, help="grid side (tomo)")
    p.add_argument("--nc", type=int, help="grid refinement exponent (pde)")
    p.add_argument("--m", type=int, help="rows of the sensing matrix (cs)")
    p.add_argument("--n", type=int, help="columns of the sensing matrix (cs)")


def _add_policy_args(p):
    p.add_argument("--policy", default="ipstop", choices=harness.POLICIES)
    p.add_argument("--eps", type=float, help="indicator stagnation threshold")
    p.add_argument("--itstart", type=int, help="first instrumented inner iteration")
    p.add_argument("--tol", type=float, help="inner residual tolerance / backstop")
    p.add_argument("--tol0", type=float, help="vartol: initial tolerance")
    p.add_argument("--tolmax", type=float, help="vartol: tightest tolerance")
    p.add_argument("--correctors", type=int, help="max corrector solves per iteration")
    p.add_argument("--mode", choices=("normal", "augmented"))
    p.add_argument("--ipm-tol", type=float, help="outer convergence tolerance")


def _size_kw(args):
    return {k: getattr(args, k) for k in ("level", "nc", "m", "n")
            if getattr(args, k) is not None}


def _policy_overrides(args):
    keys = {"fixtol": ("tol",), "vartol": ("tol0", "tolmax"),
            "ipstop": ("eps", "itstart", "tol")}[args.policy]
    rename = {"eps": "epsilon"}
    return {rename.get(k, k): getattr(args, k) for k in keys
            if getattr(args, k) is not None}


def _parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":")
            seeds.extend(range(int(lo), int(hi)))
        elif part:
            seeds.append(int(part))
    return tuple(seeds)


def cmd_gen(args):
    kwargs = harness.size_kwargs(args.family, **_size_kw(args))
    bundle = problems.generate(args.family, seed=args.seed, **kwargs)
    bundle.save(args.out)
    print("wrote %s bundle (%s, seed %d) to %s"
          % (args.family, harness.size_label(args.family, kwargs), args.seed,
             args.out))
    return True


def cmd_solve(args):
    record, result, _ = harness.run_one(
        args.family, args.policy, seed=args.seed,
        policy_overrides=_policy_overrides(args),
        bundle=problems.load(args.problem) if args.problem else None,
        correctors=args.correctors, mode=args.mode, ipm_tol=args.ipm_tol,
        **_size_kw(args))
    print("%s size=%s seed=%d policy=%s: %s in %d outer / %d inner iterations, "
          "objective %.10g, mu %.3g" %
          (args.family, record.size, args.seed, args.policy,
           "converged" if record.converged else "NOT CONVERGED",
           record.ipm_iters, record.inner_total, record.objective, record.mu))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_stats_csv(result.stats, os.path.join(args.out, "stats.csv"))
        print("wrote %s" % os.path.join(args.out, "stats.csv"))
    return record.converged


def cmd_bench(args):
    overrides = {args.policy: _policy_overrides(args)} if args.eps or args.tol \
        else {}
    suite = harness.SuiteConfig(
        family=args.family, seeds=_parse_seeds(args.seeds),
        policies=tuple(p.strip() for p in args.policies.split(",")),
        out_dir=args.out, policy_overrides=overrides,
        size=_size_kw(args))
    records, aggregate = harness.run_suite(suite)
    width = max(len(r["policy"]) for r in aggregate)
    for row in aggregate:
        print("%s size=%s %-*s: %d/%d converged, mean %.1f outer / %.1f inner"
              % (row["family"], row["size"], width, row["policy"],
                 row["converged"], row["runs"], row["mean_ipm"],
                 row["mean_inner"])
              + ("" if row["policy"] == "fixtol" or row["reduction_vs_fixtol"]
                 != row["reduction_vs_fixtol"]
                 else ", %.1f%% fewer inner than fixtol"
                 % (100.0 * row["reduction_vs_fixtol"])))
    if args.out:
        print("wrote %s and %s" % (os.path.join(args.out, "runs.csv"),
                                   os.path.join(args.out, "aggregate.csv")))
    return all(r.converged for r in records)


def cmd_trace(args):
    record, paths = harness.emit_trace(
        args.family, args.policy, seed=args.seed, ipm_iter=args.ipm_iter,
        out_dir=args.out, policy_overrides=_policy_overrides(args),
        **_size_kw(args))
    print("wrote %d trace files to %s" % (len(paths), args.out))
    return record.converged


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ipstop",
        description="Interior point solvers with indicator-based inner stopping")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and save a problem bundle")
    _add_size_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance under one policy")
    _add_size_args(p)
    _add_policy_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--problem", help="bundle directory to load instead of generating")
    p.add_argument("--out", help="directory for stats.csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="cross seeds with policies and aggregate")
    _add_size_args(p)
    _add_policy_args(p)
    p.add_argument("--seeds", default="0:5", help="e.g. 0:10 or 0,3,7")
    p.add_argument("--policies", default="fixtol,vartol,ipstop")
    p.add_argument("--out", help="directory for runs.csv / aggregate.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trace", help="record per-inner-iteration indicators")
    _add_size_args(p)
    _add_policy_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ipm-iter", type=int, help="restrict to one outer iteration")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        ok = args.func(args)
    except IpstopError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
