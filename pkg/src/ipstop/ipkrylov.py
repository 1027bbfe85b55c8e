"""Krylov solvers instrumented with outer convergence indicators.

Each solver reproduces, operation for operation, the recurrence of its
baseline counterpart in :mod:`ipstop.krylov` while tracking cheap byproducts
(matrix products of the running iterate) from which the outer interior point
quantities can be reconstructed at every inner iteration: candidate step
lengths, the relative step ratios M_x and M_s, the stepped duality measure,
and the stepped primal/dual infeasibility norms.  A solve may then stop early
once the relative change of these indicators over a trailing window stagnates
below ``epsilon``, instead of grinding the algebraic residual further down.

Three system shapes are covered:

* ``ipcg_solve``        CG on the normal equations A*Theta*A' dy = rhs (no
                        quadratic term, no free variables),
* ``ipcg_qp_solve``     CG on (Q + Theta^-1) dx = rhs (no equality rows),
* ``ipminres_solve``    MINRES on the symmetric indefinite block system
                        [[-Q - Theta^-1, A'], [A, 0]].

Corrector solves pass a :class:`CorrectorShifts` carrying the already
computed base direction; indicators are then evaluated for the combined
direction.
"""

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (BreakdownError, IndefinitenessError, IndicatorError,
                     NotSpdPreconditionerError)
from .krylov import MINRES_DRIFT_INTERVAL, StopReason

_EPS = float(np.finfo(np.float64).eps)
_TINY = 1e-300

TRACE_FIELDS = ("iter", "relres", "p_inf", "d_inf", "mu", "alpha_x", "alpha_s",
                "Mx", "Ms", "var_P", "var_D", "var_Mx", "var_Ms")


@dataclass
class EarlyStopConfig:
    """Inner stopping rule: indicator stagnation plus a residual backstop.

    ``epsilon <= 0`` disables the indicator test entirely; ``itstart`` is the
    first iteration at which indicators are evaluated; ``tau_inner`` is the
    relative-residual tolerance that always remains in force.
    """

    epsilon: float = 0.0
    itstart: float = math.inf
    tau_inner: float = 1e-8
    window: int = 5
    use_var_mu: bool = False


def residual_only(tau_inner):
    return EarlyStopConfig(epsilon=0.0, itstart=math.inf, tau_inner=tau_inner)


@dataclass
class TraceRow:
    iter: int
    relres: float
    p_inf: float = math.nan
    d_inf: float = math.nan
    mu: float = math.nan
    alpha_x: float = math.nan
    alpha_s: float = math.nan
    m_x: float = math.nan
    m_s: float = math.nan
    var_p: float = math.nan
    var_d: float = math.nan
    var_mx: float = math.nan
    var_ms: float = math.nan

    def astuple(self):
        return (self.iter, self.relres, self.p_inf, self.d_inf, self.mu,
                self.alpha_x, self.alpha_s, self.m_x, self.m_s,
                self.var_p, self.var_d, self.var_mx, self.var_ms)


def write_trace_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in rows:
            writer.writerow(["%.17g" % v if isinstance(v, float) else v
                             for v in row.astuple()])


def var_window(values, window):
    """Mean relative change of the last ``window`` transitions of a series."""
    value, _ = _var_window_flagged(values, window)
    return value


def _var_window_flagged(values, window):
    v = np.asarray(values, dtype=np.float64)
    if v.size < window + 1:
        raise ValueError("need window+1 values")
    v = v[-(window + 1):]
    prev = v[:-1]
    cur = v[1:]
    zero = prev == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.abs((cur - prev) / prev)
    if np.any(zero):
        terms = np.where(zero, 0.0, terms)
    return float(np.sum(terms) / window), bool(np.any(zero))


class VarMonitor:
    """Trailing-window stagnation monitor over the indicator series."""

    _KEYS = ("p", "d", "mx", "ms", "mu")

    def __init__(self, es, track_primal):
        self.es = es
        self.track_primal = track_primal
        maxlen = es.window + 1
        self.hist = {k: deque(maxlen=maxlen) for k in self._KEYS}

    def push(self, p, d, mx, ms, mu):
        """Record one indicator snapshot; returns (vars dict, ready, flagged)."""
        vals = {"p": p, "d": d, "mx": mx, "ms": ms, "mu": mu}
        for k in self._KEYS:
            self.hist[k].append(vals[k])
        ready = len(self.hist["d"]) == self.es.window + 1
        out = {k: math.nan for k in self._KEYS}
        flagged = False
        if ready:
            for k in self._keys_active():
                out[k], fl = _var_window_flagged(self.hist[k], self.es.window)
                flagged = flagged or fl
        return out, ready, flagged

    def _keys_active(self):
        keys = ["d", "mx", "ms"]
        if self.track_primal:
            keys.insert(0, "p")
        if self.es.use_var_mu:
            keys.append("mu")
        return keys

    def decide(self, variances, ready, flagged):
        if not ready or flagged or self.es.epsilon <= 0.0:
            return False
        return all(variances[k] < self.es.epsilon for k in self._keys_active())


@dataclass
class CorrectorShifts:
    """Tracked products and components of an already accepted base direction.

    ``primal`` is A@dx_base, ``dual`` is A'@dy_base + ds_base, ``quad`` is
    Q@dx_base; a None entry means that term does not exist in the mode at
    hand.  The raw components let the inner solve evaluate step lengths and
    the duality measure for the combined direction.
    """

    dx: np.ndarray
    dzl: np.ndarray
    dzh: np.ndarray
    primal: np.ndarray = None
    dual: np.ndarray = None
    quad: np.ndarray = None


@dataclass
class TrackedDirection:
    """A search direction together with its tracked matrix products."""

    dx: np.ndarray
    dy: np.ndarray
    dzl: np.ndarray
    dzh: np.ndarray
    ds: np.ndarray                 # combined bound-dual direction, full length
    a_dx: np.ndarray = None        # A @ dx
    at_dy: np.ndarray = None       # A' @ dy
    q_dx: np.ndarray = None        # Q @ dx
    alpha_x: float = 0.0
    alpha_s: float = 0.0
    m_x: float = math.nan
    m_s: float = math.nan
    mu_hat: float = math.nan


@dataclass
class InnerResult:
    direction: TrackedDirection
    iterations: int
    relres: float
    stop_reason: StopReason
    trace: list


def corrector_residual_terms(direction):
    """Shift terms a corrector solve needs to report combined indicators."""
    dual = direction.ds if direction.at_dy is None else direction.at_dy + direction.ds
    return CorrectorShifts(dx=direction.dx, dzl=direction.dzl, dzh=direction.dzh,
                           primal=direction.a_dx, dual=dual, quad=direction.q_dx)


def combine_directions(base, extra):
    """Sum of two tracked directions (base plus an accepted corrector)."""

    def _add(a, b):
        if a is None and b is None:
            return None
        return a + b

    return TrackedDirection(
        dx=base.dx + extra.dx,
        dy=_add(base.dy, extra.dy),
        dzl=base.dzl + extra.dzl,
        dzh=base.dzh + extra.dzh,
        ds=base.ds + extra.ds,
        a_dx=_add(base.a_dx, extra.a_dx),
        at_dy=_add(base.at_dy, extra.at_dy),
        q_dx=_add(base.q_dx, extra.q_dx),
        alpha_x=extra.alpha_x, alpha_s=extra.alpha_s,
        m_x=extra.m_x, m_s=extra.m_s, mu_hat=extra.mu_hat)


class InnerContext:
    """Everything an instrumented solve needs beyond the linear system.

    ``solve_res`` carries the right hand side residuals of this particular
    solve (for a corrector: zero primal/dual parts and the second order
    complementarity target).  ``outer_res`` carries the current outer
    residuals the indicators are measured against; for a predictor or single
    solve the two coincide.
    """

    def __init__(self, bt, solve_res, outer_res=None, es=None, shifts=None,
                 step_factor=0.995):
        self.bt = bt
        self.bounds = bt.bounds
        self.r_mu_lo = solve_res.r_mu_lo
        self.r_mu_hi = solve_res.r_mu_hi
        self.r_d_solve = solve_res.r_d
        outer = solve_res if outer_res is None else outer_res
        self.r_p = outer.r_p
        self.r_d = outer.r_d
        self.es = es if es is not None else EarlyStopConfig()
        self.shifts = shifts
        self.step_factor = step_factor
        self.v1 = bt.v1_full(self.r_mu_lo, self.r_mu_hi)

    def eliminate(self, dx):
        return self.bt.eliminate(self.r_mu_lo, self.r_mu_hi, dx)

    def evaluate(self, dx, dzl, dzh, capped=True):
        """Steps, ratios and stepped mu for the (shift-combined) direction.

        ``capped=True`` gives the steps the outer update would take;
        ``capped=False`` gives the uncapped boundary fractions used by the
        per-iteration indicator estimates.
        """
        sh = self.shifts
        if sh is not None:
            dx = dx + sh.dx
            dzl = dzl + sh.dzl
            dzh = dzh + sh.dzh if dzh.size else dzh
        if capped:
            ax, a_s = self.bt.practical_steps(dx, dzl, dzh, self.step_factor)
        else:
            ax, a_s = self.bt.indicator_steps(dx, dzl, dzh, self.step_factor)
        mx, ms = self.bt.step_ratios(dx, dzl, dzh)
        mu = self.bt.stepped_mu(dx, dzl, dzh, ax, a_s)
        return ax, a_s, mx, ms, mu


def _check_row(p, d, mx, ms, mu):
    if math.isnan(d) or math.isnan(mx) or math.isnan(ms) or math.isnan(mu) \
            or (p is not None and math.isnan(p)):
        raise IndicatorError("indicator produced NaN")


def _finish_direction(direction, ctx):
    """Fill final step data on a completed direction (without shifts)."""
    ax, a_s, mx, ms, mu = ctx.evaluate(direction.dx, direction.dzl, direction.dzh)
    direction.alpha_x = ax
    direction.alpha_s = a_s
    direction.m_x = mx
    direction.m_s = ms
    direction.mu_hat = mu
    return direction


def ipcg_solve(a_op, theta, precond, rhs, ctx, itmax=None, dy0=None, callback=None):
    """Instrumented CG on the normal equations A Theta A' dy = rhs.

    Tracks xi1 = A' dy and xi2 = A Theta A' dy alongside the CG iterate so
    the full direction (dx, ds) and all outer indicators are available at
    every iteration for the cost of O(n) extra flops.  The single additional
    matrix product versus plain CG is v3 = A v2, needed for the stepped
    primal infeasibility.
    """
    m = a_op.shape[0]
    n = a_op.shape[1]
    if itmax is None:
        itmax = 10 * m
    es = ctx.es
    bounds = ctx.bounds
    theta_inv = ctx.bt.theta_inv
    simple = bounds.simple
    sh = ctx.shifts

    v1 = ctx.v1
    v2 = theta * (v1 - ctx.r_d_solve)
    v3 = a_op.apply(v2)

    rhs = np.asarray(rhs, dtype=np.float64)
    if dy0 is not None and np.any(dy0):
        dy = np.array(dy0, dtype=np.float64)
        xi1 = a_op.apply_adjoint(dy)
        xi2 = a_op.apply(theta * xi1)
        r = rhs - xi2
    else:
        dy = np.zeros(m)
        xi1 = np.zeros(n)
        xi2 = np.zeros(m)
        r = rhs.copy()

    trace = []
    dx = np.empty(n)
    ds = np.empty(n)

    def _final():
        if simple:
            kernels.reconstruct_ne(v1, v2, theta, theta_inv, xi1, dx, ds)
            dzl, dzh = ds.copy(), np.empty(0)
            d = TrackedDirection(dx=dx.copy(), dy=dy, dzl=dzl, dzh=dzh, ds=dzl,
                                 a_dx=xi2 + v3, at_dy=xi1)
        else:
            fx = v2 + theta * xi1
            dzl, dzh = ctx.eliminate(fx)
            d = TrackedDirection(dx=fx, dy=dy, dzl=dzl, dzh=dzh,
                                 ds=bounds.scatter(dzl, dzh),
                                 a_dx=xi2 + v3, at_dy=xi1)
        return _finish_direction(d, ctx)

    r0_norm = np.linalg.norm(r)
    if r0_norm == 0.0:
        return InnerResult(_final(), 0, 0.0, StopReason.RESIDUAL_TOL, trace)
    z = precond.solve(r)
    rho = np.dot(r, z)
    if rho <= 0.0:
        raise IndefinitenessError("preconditioned residual product not positive")
    u = z.copy()
    monitor = VarMonitor(es, track_primal=True)
    relres = 1.0
    stop = StopReason.MAX_ITER
    iterations = 0
    for it in range(1, itmax + 1):
        iterations = it
        w1 = a_op.apply_adjoint(u)
        w2 = a_op.apply(theta * w1)
        denom = np.dot(w2, u)
        if denom <= 0.0:
            raise IndefinitenessError("normal equations operator is not positive definite")
        alpha = rho / denom
        dy += alpha * u
        xi1 += alpha * w1
        xi2 += alpha * w2
        r -= alpha * w2
        relres = np.linalg.norm(r) / r0_norm

        indicator_stop = False
        if it >= es.itstart:
            if simple:
                kernels.reconstruct_ne(v1, v2, theta, theta_inv, xi1, dx, ds)
                dzl, dzh = ds, np.empty(0)
                ds_comb = ds
            else:
                np.multiply(theta, xi1, out=dx)
                dx += v2
                dzl, dzh = ctx.eliminate(dx)
                ds_comb = bounds.scatter(dzl, dzh)
            ax, a_s, mx, ms, mu = ctx.evaluate(dx, dzl, dzh, capped=False)
            p_vec = xi2 + v3
            d_vec = xi1 + ds_comb
            if sh is not None:
                p_vec += sh.primal
                d_vec += sh.dual
            p_inf = kernels.axpby_norm(ctx.r_p, ax, p_vec)
            d_inf = kernels.axpby_norm(ctx.r_d, a_s, d_vec)
            _check_row(p_inf, d_inf, mx, ms, mu)
            variances, ready, flagged = monitor.push(p_inf, d_inf, mx, ms, mu)
            row = TraceRow(it, relres, p_inf, d_inf, mu, ax, a_s, mx, ms,
                           variances["p"], variances["d"],
                           variances["mx"], variances["ms"])
            indicator_stop = monitor.decide(variances, ready, flagged)
        else:
            row = TraceRow(it, relres)
        trace.append(row)
        if callback is not None:
            callback(it, dy)
        if indicator_stop:
            stop = StopReason.INDICATORS
            break
        if relres <= es.tau_inner:
            stop = StopReason.RESIDUAL_TOL
            break
        z = precond.solve(r)
        rho_new = np.dot(r, z)
        if rho_new <= 0.0:
            raise IndefinitenessError("preconditioner is not positive definite")
        beta = rho_new / rho
        u = z + beta * u
        rho = rho_new
    return InnerResult(_final(), iterations, float(relres), stop, trace)


def ipcg_qp_solve(q_op, precond, rhs, ctx, itmax=None, dx0=None, callback=None):
    """Instrumented CG on (Q + Theta^-1) dx = rhs for problems without
    equality rows.  The CG iterate is the primal direction itself; the
    quadratic product Q dx is tracked as a byproduct of the operator apply,
    so no extra matrix products are needed at all.
    """
    n = q_op.shape[0]
    if itmax is None:
        itmax = 10 * n
    es = ctx.es
    bounds = ctx.bounds
    theta_inv = ctx.bt.theta_inv
    sh = ctx.shifts
    v1 = ctx.v1

    rhs = np.asarray(rhs, dtype=np.float64)
    if dx0 is not None and np.any(dx0):
        dx = np.array(dx0, dtype=np.float64)
        q_dx = q_op.apply(dx)
        r = rhs - (q_dx + theta_inv * dx)
    else:
        dx = np.zeros(n)
        q_dx = np.zeros(n)
        r = rhs.copy()

    trace = []

    def _final():
        dzl, dzh = ctx.eliminate(dx)
        d = TrackedDirection(dx=dx.copy(), dy=None, dzl=dzl, dzh=dzh,
                             ds=bounds.scatter(dzl, dzh), q_dx=q_dx.copy())
        return _finish_direction(d, ctx)

    r0_norm = np.linalg.norm(r)
    if r0_norm == 0.0:
        return InnerResult(_final(), 0, 0.0, StopReason.RESIDUAL_TOL, trace)
    z = precond.solve(r)
    rho = np.dot(r, z)
    if rho <= 0.0:
        raise IndefinitenessError("preconditioned residual product not positive")
    u = z.copy()
    monitor = VarMonitor(es, track_primal=False)
    relres = 1.0
    stop = StopReason.MAX_ITER
    iterations = 0
    for it in range(1, itmax + 1):
        iterations = it
        qu = q_op.apply(u)
        w = qu + theta_inv * u
        denom = np.dot(w, u)
        if denom <= 0.0:
            raise IndefinitenessError("regularized quadratic operator is not positive definite")
        alpha = rho / denom
        dx += alpha * u
        q_dx += alpha * qu
        r -= alpha * w
        relres = np.linalg.norm(r) / r0_norm

        indicator_stop = False
        if it >= es.itstart:
            dzl, dzh = ctx.eliminate(dx)
            ds_comb = bounds.scatter(dzl, dzh)
            ax, a_s, mx, ms, mu = ctx.evaluate(dx, dzl, dzh, capped=False)
            d_s = ds_comb if sh is None else ds_comb + sh.dual
            d_q = q_dx if sh is None or sh.quad is None else q_dx + sh.quad
            d_inf = kernels.axpbypcz_norm(ctx.r_d, a_s, d_s, -ax, d_q)
            _check_row(None, d_inf, mx, ms, mu)
            variances, ready, flagged = monitor.push(math.nan, d_inf, mx, ms, mu)
            row = TraceRow(it, relres, math.nan, d_inf, mu, ax, a_s, mx, ms,
                           variances["p"], variances["d"],
                           variances["mx"], variances["ms"])
            indicator_stop = monitor.decide(variances, ready, flagged)
        else:
            row = TraceRow(it, relres)
        trace.append(row)
        if callback is not None:
            callback(it, dx)
        if indicator_stop:
            stop = StopReason.INDICATORS
            break
        if relres <= es.tau_inner:
            stop = StopReason.RESIDUAL_TOL
            break
        z = precond.solve(r)
        rho_new = np.dot(r, z)
        if rho_new <= 0.0:
            raise IndefinitenessError("preconditioner is not positive definite")
        beta = rho_new / rho
        u = z + beta * u
        rho = rho_new
    return InnerResult(_final(), iterations, float(relres), stop, trace)


def ipminres_solve(aug_op, precond, rhs, ctx, itmax=None, callback=None):
    """Instrumented MINRES on the symmetric block system.

    The Lanczos basis vectors are pushed through Q, A and A' exactly once
    per iteration inside the operator apply; the same three-term recurrence
    that forms the iterate then also forms xi = [Q dx; A dx; A' dy], giving
    the stepped infeasibilities without extra matrix products.
    """
    n = aug_op.n
    m = aug_op.m
    size = n + m
    if itmax is None:
        itmax = 10 * size
    es = ctx.es
    bounds = ctx.bounds
    sh = ctx.shifts

    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros(size)
    xi = np.zeros(n + m + n)
    trace = []

    def _final():
        fx = x[:n]
        dzl, dzh = ctx.eliminate(fx)
        d = TrackedDirection(dx=fx.copy(), dy=x[n:].copy(), dzl=dzl, dzh=dzh,
                             ds=bounds.scatter(dzl, dzh),
                             a_dx=xi[n:n + m].copy(), at_dy=xi[n + m:].copy(),
                             q_dx=xi[:n].copy())
        return _finish_direction(d, ctx)

    r1 = rhs.copy()
    y = precond.solve(r1)
    beta1_sq = np.dot(r1, y)
    if beta1_sq < 0.0:
        raise NotSpdPreconditionerError("preconditioner produced negative inner product")
    if beta1_sq == 0.0:
        return InnerResult(_final(), 0, 0.0, StopReason.RESIDUAL_TOL, trace)
    beta1 = np.sqrt(beta1_sq)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(size)
    w2 = np.zeros(size)
    wv = np.zeros(n + m + n)
    wv2 = np.zeros(n + m + n)
    r2 = r1
    monitor = VarMonitor(es, track_primal=m > 0)
    relres = 1.0
    stop = StopReason.MAX_ITER
    iterations = 0
    for it in range(1, itmax + 1):
        iterations = it
        if beta < _TINY:
            raise BreakdownError("Lanczos beta vanished before convergence")
        v = y / beta
        y, qv, av, atv = aug_op.apply_with_byproducts(v)
        zv = np.concatenate((qv, av, atv))
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = np.dot(v, y)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = precond.solve(r2)
        oldb = beta
        beta_sq = np.dot(r2, y)
        if beta_sq < -1e-13 * (np.linalg.norm(r2) * np.linalg.norm(y) + _TINY):
            raise NotSpdPreconditionerError("preconditioner produced negative inner product")
        beta = np.sqrt(max(beta_sq, 0.0))

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.sqrt(gbar * gbar + beta * beta), _EPS)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        wv1 = wv2
        wv2 = wv
        wv = (zv - oldeps * wv1 - delta * wv2) / gamma
        x += phi * w
        xi += phi * wv

        if it % MINRES_DRIFT_INTERVAL == 0:
            rt = rhs - aug_op.apply(x)
            phibar = np.sqrt(max(np.dot(rt, precond.solve(rt)), 0.0))
        relres = phibar / beta1

        indicator_stop = False
        if it >= es.itstart:
            dxv = x[:n]
            dzl, dzh = ctx.eliminate(dxv)
            ds_comb = bounds.scatter(dzl, dzh)
            ax, a_s, mx, ms, mu = ctx.evaluate(dxv, dzl, dzh, capped=False)
            d_s = xi[n + m:] + ds_comb
            d_q = xi[:n]
            if sh is not None:
                d_s = d_s + sh.dual
                if sh.quad is not None:
                    d_q = d_q + sh.quad
            d_inf = kernels.axpbypcz_norm(ctx.r_d, a_s, d_s, -ax, d_q)
            if m > 0:
                p_vec = xi[n:n + m] if sh is None else xi[n:n + m] + sh.primal
                p_inf = kernels.axpby_norm(ctx.r_p, ax, p_vec)
            else:
                p_inf = math.nan
            _check_row(p_inf if m > 0 else None, d_inf, mx, ms, mu)
            variances, ready, flagged = monitor.push(p_inf, d_inf, mx, ms, mu)
            row = TraceRow(it, relres, p_inf, d_inf, mu, ax, a_s, mx, ms,
                           variances["p"], variances["d"],
                           variances["mx"], variances["ms"])
            indicator_stop = monitor.decide(variances, ready, flagged)
        else:
            row = TraceRow(it, relres)
        trace.append(row)
        if callback is not None:
            callback(it, x)
        if indicator_stop:
            stop = StopReason.INDICATORS
            break
        if relres <= es.tau_inner:
            stop = StopReason.RESIDUAL_TOL
            break
    return InnerResult(_final(), iterations, float(relres), stop, trace)
