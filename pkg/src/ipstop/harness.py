"""Benchmark harness: run problem families under different inner stopping
policies and aggregate iteration counts.

Policies compared: ``fixtol`` (fixed inner residual tolerance), ``vartol``
(tolerance proportional to the duality measure) and ``ipstop`` (indicator
stagnation with a residual backstop).  Per-family defaults reflect how hard
each family's systems are and which Newton system form is used.
"""

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import problems
from .errors import ConfigError, IterationLimit
from .ipkrylov import write_trace_csv
from .ipm import (FixTol, IndicatorStop, IpmConfig, VarTol, ipm_solve,
                  write_stats_csv)

POLICIES = ("fixtol", "vartol", "ipstop")

FAMILY_DEFAULTS = {
    # Plain predictor runs: with centrality correctors the outer counts
    # collapse far below the regime the stopping comparison is about, and
    # the early-stop runs then pay their dual mop-up iterations against a
    # baseline that has none to spare.
    "tomo": {
        "ipm_tol": 1e-8, "correctors": 0, "mode": "normal",
        "fixtol": {"tol": 1e-6},
        "vartol": {"tol0": 1e-3, "tolmax": 1e-6},
        "ipstop": {"epsilon": 1e-2, "itstart": 5, "tol": 1e-6},
    },
    # The recovery QP keeps |rhs| at the regularizer scale all the way to the
    # optimum, so the inner tolerance must sit below the outer dual tolerance
    # or the dual residual floors out; indicators compensate with a larger
    # stagnation epsilon since most late steps are unit steps.
    "cs": {
        "ipm_tol": 1e-6, "correctors": 0, "mode": "normal",
        "fixtol": {"tol": 3e-6},
        "vartol": {"tol0": 1e-2, "tolmax": 3e-6},
        "ipstop": {"epsilon": 0.1, "itstart": 5, "tol": 3e-6},
    },
    "pde": {
        "ipm_tol": 1e-8, "correctors": 2, "mode": "augmented",
        "fixtol": {"tol": 1e-8},
        "vartol": {"tol0": 1e-2, "tolmax": 1e-8},
        "ipstop": {"epsilon": 1e-3, "itstart": 15, "tol": 1e-8},
    },
}

_POLICY_CLASSES = {"fixtol": FixTol, "vartol": VarTol, "ipstop": IndicatorStop}


def make_policy(family, name, **overrides):
    if name not in _POLICY_CLASSES:
        raise ConfigError("unknown policy %r (have %s)" % (name, ", ".join(POLICIES)))
    params = dict(FAMILY_DEFAULTS[family][name])
    for key, val in overrides.items():
        if val is not None:
            params[key] = val
    return _POLICY_CLASSES[name](**params)


def make_config(family, policy, correctors=None, mode=None, ipm_tol=None,
                max_iter=100, trace_every_inner=False):
    defaults = FAMILY_DEFAULTS[family]
    tol = ipm_tol if ipm_tol is not None else defaults["ipm_tol"]
    return IpmConfig(
        tol_p=tol, tol_d=tol, tol_mu=tol, max_iter=max_iter,
        mode=mode if mode is not None else defaults["mode"],
        policy=policy,
        max_correctors=correctors if correctors is not None else defaults["correctors"],
        trace_every_inner=trace_every_inner,
    )


def size_kwargs(family, level=None, nc=None, m=None, n=None):
    if family == "tomo":
        return {"level": level if level is not None else 32}
    if family == "pde":
        return {"nc": nc if nc is not None else 4}
    if family == "cs":
        return {"m": m if m is not None else 512,
                "n": n if n is not None else 2048}
    raise ConfigError("unknown family %r" % (family,))


def size_label(family, kwargs):
    if family == "cs":
        return "%dx%d" % (kwargs["m"], kwargs["n"])
    return str(kwargs.get("level", kwargs.get("nc")))


@dataclass
class RunRecord:
    family: str
    size: str
    seed: int
    policy: str
    converged: bool
    ipm_iters: int
    inner_total: int
    time_s: float
    mu: float
    r_p_rel: float
    r_d_rel: float
    objective: float


def run_one(family, policy_name, seed=0, policy_overrides=None, bundle=None,
            correctors=None, mode=None, ipm_tol=None, max_iter=100,
            trace_every_inner=False, **size_kw):
    """Generate (or reuse) one instance and solve it under one policy."""
    if bundle is None:
        kwargs = size_kwargs(family, **size_kw)
        bundle = problems.generate(family, seed=seed, **kwargs)
    else:
        kwargs = {k: v for k, v in bundle.params.items()
                  if k in ("level", "nc", "m", "n")}
        seed = bundle.params.get("seed", seed)
    policy = make_policy(family, policy_name, **(policy_overrides or {}))
    cfg = make_config(family, policy, correctors=correctors, mode=mode,
                      ipm_tol=ipm_tol, max_iter=max_iter,
                      trace_every_inner=trace_every_inner)
    start = time.perf_counter()
    try:
        result = ipm_solve(bundle.problem, cfg)
    except IterationLimit as err:
        result = err.result
    elapsed = time.perf_counter() - start
    record = RunRecord(
        family=family, size=size_label(family, kwargs), seed=seed,
        policy=policy_name, converged=result.converged,
        ipm_iters=result.iterations, inner_total=result.inner_total,
        time_s=elapsed, mu=result.mu, r_p_rel=result.r_p_rel,
        r_d_rel=result.r_d_rel, objective=result.objective)
    return record, result, bundle


@dataclass
class SuiteConfig:
    family: str
    seeds: tuple = (0,)
    policies: tuple = POLICIES
    out_dir: str = None
    policy_overrides: dict = field(default_factory=dict)
    size: dict = field(default_factory=dict)


def run_suite(suite):
    """All seeds crossed with all policies, one generated instance per seed."""
    records = []
    for seed in suite.seeds:
        bundle = None
        for policy in suite.policies:
            record, _, bundle = run_one(
                suite.family, policy, seed=seed,
                policy_overrides=suite.policy_overrides.get(policy),
                bundle=bundle, **suite.size)
            records.append(record)
    aggregate = aggregate_records(records)
    if suite.out_dir:
        os.makedirs(suite.out_dir, exist_ok=True)
        write_runs_csv(records, os.path.join(suite.out_dir, "runs.csv"))
        write_aggregate_csv(aggregate, os.path.join(suite.out_dir, "aggregate.csv"))
    return records, aggregate


def aggregate_records(records):
    """Mean iteration counts per (family, size, policy), with percentage
    reductions 100*(1 - mean/baseline) in inner iterations and wall time
    relative to the fixtol and vartol rows of the same instance group."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.family, rec.size, rec.policy), []).append(rec)
    base = {}
    for (family, size, policy), recs in groups.items():
        if policy in ("fixtol", "vartol"):
            base[(family, size, policy)] = (
                float(np.mean([r.inner_total for r in recs])),
                float(np.mean([r.time_s for r in recs])))
    rows = []
    for (family, size, policy), recs in sorted(groups.items()):
        mean_inner = float(np.mean([r.inner_total for r in recs]))
        mean_time = float(np.mean([r.time_s for r in recs]))
        row = {
            "family": family, "size": size, "policy": policy,
            "runs": len(recs),
            "converged": sum(r.converged for r in recs),
            "mean_ipm": float(np.mean([r.ipm_iters for r in recs])),
            "mean_inner": mean_inner,
            "mean_time_s": mean_time,
        }
        for ref in ("fixtol", "vartol"):
            ref_base = base.get((family, size, ref))
            if ref_base is None or policy == ref:
                red_inner = red_time = float("nan")
            else:
                red_inner = 100.0 * (1.0 - mean_inner / ref_base[0])
                red_time = 100.0 * (1.0 - mean_time / ref_base[1])
            row["red_inner_vs_%s" % ref] = red_inner
            row["red_time_vs_%s" % ref] = red_time
        rows.append(row)
    return rows


def write_runs_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("family", "size", "seed", "policy", "converged",
                         "ipm_iters", "inner_total", "time_s", "mu",
                         "rP_rel", "rD_rel", "objective"))
        for r in records:
            writer.writerow((r.family, r.size, r.seed, r.policy, int(r.converged),
                             r.ipm_iters, r.inner_total, "%.6f" % r.time_s,
                             "%.17g" % r.mu, "%.17g" % r.r_p_rel,
                             "%.17g" % r.r_d_rel, "%.17g" % r.objective))


def write_aggregate_csv(rows, path):
    fields = ("family", "size", "policy", "runs", "converged", "mean_ipm",
              "mean_inner", "mean_time_s", "red_inner_vs_fixtol",
              "red_time_vs_fixtol", "red_inner_vs_vartol", "red_time_vs_vartol")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(["" if isinstance(row[f], float) and math.isnan(row[f])
                             else row[f] for f in fields])


def emit_trace(family, policy_name, seed=0, ipm_iter=None, out_dir=".",
               policy_overrides=None, **size_kw):
    """Solve once recording every inner iteration; write one CSV per solve.

    Files are named trace_ipm<K>_solve<J>.csv.  Returns the written paths.
    """
    record, result, _ = run_one(family, policy_name, seed=seed,
                                policy_overrides=policy_overrides,
                                trace_every_inner=True, **size_kw)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for k, solves in enumerate(result.traces, start=1):
        if ipm_iter is not None and k != ipm_iter:
            continue
        for j, rows in enumerate(solves, start=1):
            path = os.path.join(out_dir, "trace_ipm%d_solve%d.csv" % (k, j))
            write_trace_csv(rows, path)
            paths.append(path)
    write_stats_csv(result.stats, os.path.join(out_dir, "stats.csv"))
    return record, paths
