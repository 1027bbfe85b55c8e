"""Primal-dual interior point method with inexact Krylov directions.

Solves   min c'x + x'Qx/2   s.t.  Ax = b,  lower <= x <= upper
with Q symmetric positive semidefinite and any mix of one-sided, two-sided
and free variables.  The Newton systems are reduced either to the normal
equations (CG) or kept in symmetric block form (MINRES); both inner solvers
are the instrumented variants from :mod:`ipstop.ipkrylov`, so the inner
stopping rule is pluggable: a fixed residual tolerance, a tolerance tied to
the current duality measure, or stagnation of the outer convergence
indicators.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ipkrylov, kernels, linop
from .errors import ConfigError, InnerFailure, IterationLimit, ModeError
from .ipkrylov import (CorrectorShifts, EarlyStopConfig, InnerContext,
                       InnerResult, TrackedDirection, combine_directions,
                       corrector_residual_terms, residual_only)
from .krylov import StopReason
from .state import BarrierTerms, Bounds, Iterate, Residuals

# a direction whose step length falls below this is considered unusable
MIN_USEFUL_STEP = 1e-8


@dataclass
class FixTol:
    """Fixed inner relative-residual tolerance."""

    tol: float = 1e-6

    def inner_config(self, mu, mu0):
        return residual_only(self.tol)

    def label(self):
        return "fixtol"


@dataclass
class VarTol:
    """Inner tolerance proportional to the current duality measure."""

    tol0: float = 1e-3
    tolmax: float = 1e-6

    def inner_config(self, mu, mu0):
        return residual_only(vartol_tolerance(mu, mu0, self.tol0, self.tolmax))

    def label(self):
        return "vartol"


@dataclass
class IndicatorStop:
    """Stop inner iterations on indicator stagnation, with a residual backstop."""

    epsilon: float = 1e-2
    itstart: int = 5
    tol: float = 1e-6
    window: int = 5
    use_var_mu: bool = False

    def inner_config(self, mu, mu0):
        return EarlyStopConfig(epsilon=self.epsilon, itstart=self.itstart,
                               tau_inner=self.tol, window=self.window,
                               use_var_mu=self.use_var_mu)

    def label(self):
        return "ipstop"


def vartol_tolerance(mu, mu0, tol0, tolmax):
    return max(tolmax, (mu / mu0) * tol0)


class ProblemInstance:
    """Problem data behind operator interfaces.

    ``q_op`` may be None (linear objective); ``a_op``/``b`` may be None (no
    equality rows).  ``precond_factory(problem, barrier)`` returns an object
    with a ``solve`` method for the Newton system of the current iterate; if
    None, the identity is used.
    """

    def __init__(self, c, q_op=None, a_op=None, b=None, lower=None, upper=None,
                 precond_factory=None, name="", meta=None):
        self.c = np.asarray(c, dtype=np.float64)
        self.n = self.c.size
        self.q_op = q_op
        self.a_op = a_op
        if (a_op is None) != (b is None):
            raise ConfigError("a_op and b must be given together")
        self.b = np.asarray(b, dtype=np.float64) if b is not None else None
        self.m = 0 if a_op is None else a_op.shape[0]
        if a_op is not None and (a_op.shape[1] != self.n or self.b.size != self.m):
            raise ConfigError("equality block shape mismatch")
        if q_op is not None and q_op.shape != (self.n, self.n):
            raise ConfigError("quadratic block shape mismatch")
        lower = np.zeros(self.n) if lower is None else lower
        upper = np.full(self.n, np.inf) if upper is None else upper
        self.bounds = Bounds(lower, upper)
        self.precond_factory = precond_factory
        self.name = name
        self.meta = dict(meta or {})

    @property
    def is_lp(self):
        return self.q_op is None

    def q_apply(self, v):
        if self.q_op is None:
            return np.zeros(self.n)
        return self.q_op.apply(v)

    def objective(self, x):
        val = float(np.dot(self.c, x))
        if self.q_op is not None:
            val += 0.5 * float(np.dot(x, self.q_op.apply(x)))
        return val


@dataclass
class IpmConfig:
    tol_p: float = 1e-8
    tol_d: float = 1e-8
    tol_mu: float = 1e-8
    max_iter: int = 100
    mode: str = "auto"             # auto | normal | augmented
    policy: object = field(default_factory=FixTol)
    max_correctors: int = 1
    step_factor: float = 0.995
    sigma_min: float = 1e-4
    sigma_max: float = 0.9
    inner_itmax: int = 0           # 0 means choose from the system size
    balance_gate: float = 1e4      # max residual lag behind mu; 0 disables
    trace_every_inner: bool = False


@dataclass
class IterStats:
    ipm_iter: int
    inner_its: int
    final_relres: float
    alpha_x: float
    alpha_s: float
    mu: float
    r_p: float
    r_d: float
    stop_reason: str


@dataclass
class IpmResult:
    iterate: Iterate
    converged: bool
    iterations: int
    objective: float
    mu: float
    r_p_rel: float
    r_d_rel: float
    inner_total: int
    stats: list
    mode: str
    traces: list = field(default_factory=list)


def compute_residuals(problem, iterate, bt, sigma):
    """Outer KKT residuals and the sigma-weighted complementarity target."""
    x = iterate.x
    if problem.m:
        r_p = problem.b - problem.a_op.apply(x)
    else:
        r_p = None
    r_d = problem.c + problem.q_apply(x)
    if problem.m:
        r_d -= problem.a_op.apply_adjoint(iterate.y)
    bounds = problem.bounds
    if bounds.simple:
        r_d -= iterate.zl
    else:
        r_d[bounds.idx_lo] -= iterate.zl
        if bounds.n_hi:
            r_d[bounds.idx_hi] += iterate.zh
    r_mu_lo, r_mu_hi = bt.complementarity_rhs(sigma)
    return Residuals(r_p, r_d, r_mu_lo, r_mu_hi, bt.mu, sigma)


def initial_iterate(problem):
    """Well-centered starting point at moderate distance from the bounds."""
    bounds = problem.bounds
    scale = max(1.0, float(np.max(np.abs(problem.c), initial=0.0)))
    if problem.b is not None and problem.b.size:
        scale = max(scale, float(np.max(np.abs(problem.b))))
    x = np.zeros(problem.n)
    if bounds.simple:
        x[:] = scale
    else:
        lo = bounds.lower
        hi = bounds.upper
        both = np.isfinite(lo) & np.isfinite(hi)
        only_lo = np.isfinite(lo) & ~both
        only_hi = np.isfinite(hi) & ~both
        x[both] = 0.5 * (lo[both] + hi[both])
        x[only_lo] = lo[only_lo] + scale
        x[only_hi] = hi[only_hi] - scale
    zl = np.full(bounds.n_lo, scale)
    zh = np.full(bounds.n_hi, scale)
    y = np.zeros(problem.m)
    return Iterate(x, y, zl, zh)


def choose_mode(problem, mode):
    if mode == "auto":
        if problem.bounds.has_free or (not problem.is_lp and problem.m > 0):
            return "augmented"
        return "normal"
    if mode == "normal":
        if problem.bounds.has_free:
            raise ModeError("normal equations cannot handle free variables")
        if not problem.is_lp and problem.m > 0:
            raise ModeError("normal equations with a quadratic term need m == 0")
        return "normal"
    if mode == "augmented":
        if problem.m == 0:
            raise ModeError("augmented form needs equality rows; use mode='normal'")
        return "augmented"
    raise ConfigError("unknown mode %r" % (mode,))


def assemble_normal_equations(problem, bt, res):
    """Operator and right hand side of the reduced system for this iterate.

    LP with equality rows: A Theta A' dy = r_p + A Theta (r_d - v1).
    QP without equality rows: (Q + Theta^-1) dx = v1 - r_d.
    """
    v1 = bt.v1_full(res.r_mu_lo, res.r_mu_hi)
    if problem.is_lp and problem.m > 0:
        theta = bt.theta
        op = linop.NormalEqOperator(problem.a_op, theta)
        rhs1 = res.r_p - problem.a_op.apply(theta * (v1 - res.r_d))
        # algebraically r_p + A Theta (r_d - v1); written as r_p - A v2 to
        # share the v2 product with the instrumented solver
        return op, rhs1
    if problem.m == 0 and not problem.is_lp:
        op = linop.ShiftedOperator(problem.q_op, bt.theta_inv)
        return op, v1 - res.r_d
    raise ModeError("normal equations need either an LP with rows or a QP without rows")


def assemble_augmented(problem, bt, res):
    q_op = problem.q_op if problem.q_op is not None else linop.ZeroOperator(problem.n)
    op = linop.AugmentedOperator(q_op, problem.a_op, bt.theta_inv)
    v1 = bt.v1_full(res.r_mu_lo, res.r_mu_hi)
    rhs = np.concatenate((res.r_d - v1, res.r_p))
    return op, rhs


def choose_sigma(mu_aff, mu, sigma_min, sigma_max):
    """Mehrotra heuristic, clamped away from 0 and 1."""
    ratio = max(mu_aff, 0.0) / mu
    return float(min(max(ratio ** 3, sigma_min), sigma_max))


def _corrector_target(bt, direction, sigma, mu, alpha_best):
    """Second order complementarity target for the next corrector.

    The trial products are pushed toward the central path but only where
    they leave the box [0.1 sigma mu, 10 sigma mu]; inside it the corrector
    right hand side is zero.
    """
    bounds = bt.bounds
    a_trial = min(1.0, alpha_best + 0.3)
    dx_lo = direction.dx[bounds.idx_lo]
    prod_lo = (bt.slack_lo + a_trial * dx_lo) * (bt.zl + a_trial * direction.dzl)
    lo_t = np.clip(prod_lo, 0.1 * sigma * mu, 10.0 * sigma * mu)
    r_lo = lo_t - prod_lo
    if bounds.n_hi:
        dx_hi = direction.dx[bounds.idx_hi]
        prod_hi = (bt.slack_hi - a_trial * dx_hi) * (bt.zh + a_trial * direction.dzh)
        hi_t = np.clip(prod_hi, 0.1 * sigma * mu, 10.0 * sigma * mu)
        r_hi = hi_t - prod_hi
    else:
        r_hi = np.empty(0)
    return r_lo, r_hi


def _mehrotra_corrector_target(bt, direction, sigma, mu):
    """First corrector: recenter and cancel the predictor's product curvature."""
    bounds = bt.bounds
    dx_lo = direction.dx[bounds.idx_lo]
    r_lo = sigma * mu - dx_lo * direction.dzl
    if bounds.n_hi:
        dx_hi = direction.dx[bounds.idx_hi]
        r_hi = sigma * mu + dx_hi * direction.dzh
    else:
        r_hi = np.empty(0)
    return r_lo, r_hi


class _InnerDriver:
    """One outer iteration's view of the Newton system: assembles the right
    hand side for arbitrary residuals and runs the instrumented solver."""

    def __init__(self, problem, bt, outer_res, mode, precond, itmax, step_factor):
        self.problem = problem
        self.bt = bt
        self.outer = outer_res
        self.mode = mode
        self.precond = precond
        self.itmax = itmax
        self.step_factor = step_factor
        if mode == "augmented":
            self.op, _ = assemble_augmented(problem, bt, outer_res)
        elif problem.is_lp and problem.m > 0:
            self.theta = bt.theta
        self.inner_calls = 0
        self.traces = []

    def solve(self, solve_res, es, shifts=None):
        ctx = InnerContext(self.bt, solve_res, outer_res=self.outer, es=es,
                           shifts=shifts, step_factor=self.step_factor)
        problem = self.problem
        if self.mode == "augmented":
            v1 = ctx.v1
            rhs = np.concatenate((solve_res.r_d - v1, solve_res.r_p))
            out = ipkrylov.ipminres_solve(self.op, self.precond, rhs, ctx,
                                          itmax=self.itmax)
        elif problem.is_lp and problem.m > 0:
            v2 = self.theta * (ctx.v1 - solve_res.r_d)
            rhs = solve_res.r_p - problem.a_op.apply(v2)
            out = ipkrylov.ipcg_solve(problem.a_op, self.theta, self.precond,
                                      rhs, ctx, itmax=self.itmax)
        else:
            rhs = ctx.v1 - solve_res.r_d
            out = ipkrylov.ipcg_qp_solve(problem.q_op, self.precond, rhs, ctx,
                                         itmax=self.itmax)
        self.inner_calls += 1
        self.traces.append(out.trace)
        return out

    def zeros_res(self, r_mu_lo, r_mu_hi):
        """Residual container for a corrector: zero primal/dual parts."""
        r_p = np.zeros(self.problem.m) if self.problem.m else None
        return Residuals(r_p, np.zeros(self.problem.n), r_mu_lo, r_mu_hi,
                         self.outer.mu, self.outer.sigma)


def _usable(direction):
    return min(direction.alpha_x, direction.alpha_s) >= MIN_USEFUL_STEP


def _stepped_rel_residuals(res, direction, ax, a_s, m, b_den, c_den):
    """Relative residual norms after a step, from the solver byproducts."""
    p = (kernels.axpby_norm(res.r_p, ax, direction.a_dx) / b_den
         if m and direction.a_dx is not None else 0.0)
    dual = direction.ds if direction.at_dy is None \
        else direction.at_dy + direction.ds
    if direction.q_dx is None:
        d = kernels.axpby_norm(res.r_d, a_s, dual) / c_den
    else:
        d = kernels.axpbypcz_norm(res.r_d, a_s, dual, -ax, direction.q_dx) / c_den
    return p, d


def _balance_damping(res, direction, ax, a_s, bt, m, b_den, c_den, mu0, r0, cfg):
    """Common damping factor keeping the duality measure tied to the residuals.

    The duality measure must not race ahead of infeasibility: once it does the
    inner stopping threshold sits above what the dual residual needs and the
    outer loop stalls with mu collapsing to nothing.  Halve both step lengths
    until the stepped measures stay within ``balance_gate`` of each other in
    relative terms; residuals already below tolerance never hold a step back.
    """
    p0, d0 = r0
    t = 1.0
    for _ in range(6):
        p_t, d_t = _stepped_rel_residuals(res, direction, t * ax, t * a_s,
                                          m, b_den, c_den)
        lag = max(p_t / p0 if p_t > cfg.tol_p else 0.0,
                  d_t / d0 if d_t > cfg.tol_d else 0.0)
        if lag <= 0.0:
            return t
        mu_t = bt.stepped_mu(direction.dx, direction.dzl, direction.dzh,
                             t * ax, t * a_s)
        if lag <= cfg.balance_gate * (mu_t / mu0):
            return t
        t *= 0.5
    return t * 2.0


def _solve_guarded(driver, solve_res, es, shifts=None):
    """Run an inner solve; on indicator trouble fall back to residual-only.

    Returns (result, list_of_results) where the list carries everything that
    consumed iterations (for honest accounting).
    """
    attempts = []
    try:
        out = driver.solve(solve_res, es, shifts)
        attempts.append(out)
        if out.stop_reason == StopReason.INDICATORS and shifts is None \
                and not _usable(out.direction):
            out = driver.solve(solve_res, residual_only(es.tau_inner), shifts)
            attempts.append(out)
    except ipkrylov.IndicatorError:
        out = driver.solve(solve_res, residual_only(es.tau_inner), shifts)
        attempts.append(out)
    if out.stop_reason == StopReason.MAX_ITER and out.relres > 0.5:
        raise InnerFailure("inner solver hit its iteration limit at relative "
                           "residual %.3g" % out.relres)
    return out, attempts


def ipm_solve(problem, config=None):
    """Run the interior point method; returns an :class:`IpmResult`.

    Raises :class:`IterationLimit` (with partial stats attached) when the
    outer loop exhausts ``max_iter`` without meeting the tolerances.
    """
    cfg = config if config is not None else IpmConfig()
    mode = choose_mode(problem, cfg.mode)
    bounds = problem.bounds
    iterate = initial_iterate(problem)
    b_norm = float(np.linalg.norm(problem.b)) if problem.m else 0.0
    c_norm = float(np.linalg.norm(problem.c))
    b_den = b_norm if b_norm > 0 else 1.0
    c_den = c_norm if c_norm > 0 else 1.0

    stats = []
    traces = []
    inner_total = 0
    mu0 = None
    prev_step = 1.0
    system_size = problem.m if (mode == "normal" and problem.is_lp and problem.m) \
        else (problem.n + problem.m if mode == "augmented" else problem.n)
    itmax = cfg.inner_itmax if cfg.inner_itmax else max(200, 2 * system_size)

    converged = False
    r_p_rel = r_d_rel = math.inf
    for k in range(1, cfg.max_iter + 1):
        bt = BarrierTerms(bounds, iterate)
        res = compute_residuals(problem, iterate, bt, 0.0)
        r_p_rel = float(np.linalg.norm(res.r_p)) / b_den if problem.m else 0.0
        r_d_rel = float(np.linalg.norm(res.r_d)) / c_den
        if mu0 is None:
            mu0 = bt.mu
            r0_rel = (max(r_p_rel, 1e-12), max(r_d_rel, 1e-12))
        if r_p_rel <= cfg.tol_p and r_d_rel <= cfg.tol_d and bt.mu <= cfg.tol_mu:
            converged = True
            break

        precond = (problem.precond_factory(problem, bt)
                   if problem.precond_factory is not None
                   else linop.IdentityOperator(system_size))
        es = cfg.policy.inner_config(bt.mu, mu0)
        driver = _InnerDriver(problem, bt, res, mode, precond, itmax,
                              cfg.step_factor)

        attempts_all = []
        if cfg.max_correctors > 0:
            # predictor: pure Newton direction, sigma = 0
            aff_res = Residuals(res.r_p, res.r_d, *bt.complementarity_rhs(0.0),
                                bt.mu, 0.0)
            pred, att = _solve_guarded(driver, aff_res, es)
            attempts_all.extend(att)
            direction = pred.direction
            alpha_best = min(direction.alpha_x, direction.alpha_s)
            mu_aff = bt.stepped_mu(direction.dx, direction.dzl, direction.dzh,
                                   direction.alpha_x, direction.alpha_s)
            sigma = choose_sigma(mu_aff, bt.mu, cfg.sigma_min, cfg.sigma_max)
            first_rejected = False
            for j in range(cfg.max_correctors):
                if j == 0:
                    r_lo, r_hi = _mehrotra_corrector_target(bt, direction, sigma, bt.mu)
                else:
                    r_lo, r_hi = _corrector_target(bt, direction, sigma, bt.mu,
                                                   alpha_best)
                    if not (np.any(r_lo) or np.any(r_hi)):
                        break
                shifts = corrector_residual_terms(direction)
                corr, att = _solve_guarded(driver, driver.zeros_res(r_lo, r_hi),
                                           es, shifts)
                attempts_all.extend(att)
                cand = combine_directions(direction, corr.direction)
                a_cand = min(cand.alpha_x, cand.alpha_s)
                if a_cand > alpha_best:
                    direction = cand
                    alpha_best = a_cand
                else:
                    if j == 0:
                        first_rejected = True
                    break
            if first_rejected and alpha_best < 0.2:
                # recentre once with a plain sigma-weighted solve
                safe_res = Residuals(res.r_p, res.r_d,
                                     *bt.complementarity_rhs(0.5), bt.mu, 0.5)
                retry, att = _solve_guarded(driver, safe_res,
                                            residual_only(es.tau_inner))
                attempts_all.extend(att)
                if min(retry.direction.alpha_x, retry.direction.alpha_s) > alpha_best:
                    direction = retry.direction
                    alpha_best = min(direction.alpha_x, direction.alpha_s)
        else:
            # single sigma-weighted solve per outer iteration
            sigma = 0.5 if (k == 1 or prev_step < 0.3) else 0.1
            one_res = Residuals(res.r_p, res.r_d, *bt.complementarity_rhs(sigma),
                                bt.mu, sigma)
            single, att = _solve_guarded(driver, one_res, es)
            attempts_all.extend(att)
            direction = single.direction

        ax = direction.alpha_x
        a_s = direction.alpha_s
        if problem.q_op is not None:
            # unequal steps would re-inject (ax - as) Q dx into the dual
            # residual, which no amount of inner accuracy can remove
            ax = a_s = min(ax, a_s)
        if cfg.balance_gate > 0:
            t = _balance_damping(res, direction, ax, a_s, bt, problem.m,
                                 b_den, c_den, mu0, r0_rel, cfg)
            ax *= t
            a_s *= t
        iterate.x += ax * direction.dx
        if problem.m:
            iterate.y += a_s * direction.dy
        iterate.zl += a_s * direction.dzl
        if bounds.n_hi:
            iterate.zh += a_s * direction.dzh
        prev_step = min(ax, a_s)

        inner_iter = sum(a.iterations for a in attempts_all)
        inner_total += inner_iter
        reasons = [a.stop_reason.value for a in attempts_all]
        stats.append(IterStats(k, inner_iter, attempts_all[-1].relres, ax, a_s,
                               bt.mu, r_p_rel, r_d_rel, ";".join(reasons)))
        if cfg.trace_every_inner:
            traces.append(driver.traces)

    if not converged:
        bt = BarrierTerms(bounds, iterate)
        res = compute_residuals(problem, iterate, bt, 0.0)
        r_p_rel = float(np.linalg.norm(res.r_p)) / b_den if problem.m else 0.0
        r_d_rel = float(np.linalg.norm(res.r_d)) / c_den

    result = IpmResult(iterate=iterate, converged=converged,
                       iterations=len(stats), objective=problem.objective(iterate.x),
                       mu=bt.mu, r_p_rel=r_p_rel, r_d_rel=r_d_rel,
                       inner_total=inner_total, stats=stats, mode=mode,
                       traces=traces)
    if not converged:
        err = IterationLimit("no convergence in %d iterations" % cfg.max_iter)
        err.stats = stats
        err.result = result
        raise err
    return result


def write_stats_csv(stats, path):
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("ipm_iter", "inner_its", "final_relres", "alpha_x",
                         "alpha_s", "mu", "rP", "rD", "stop_reason"))
        for s in stats:
            writer.writerow((s.ipm_iter, s.inner_its, "%.17g" % s.final_relres,
                             "%.17g" % s.alpha_x, "%.17g" % s.alpha_s,
                             "%.17g" % s.mu, "%.17g" % s.r_p, "%.17g" % s.r_d,
                             s.stop_reason))
