"""Step-size guarantees for inexact directions, and a safeguarded solver.

For nonnegative-orthant LPs, a search direction that (a) keeps the relative
componentwise steps bounded by M, (b) reduces both infeasibility norms by a
factor 1 - omega*alpha, and (c) satisfies the linearized complementarity
equation exactly, admits a uniform lower bound alpha_tilde on step lengths
that keep the iterate inside a wide product neighborhood while decreasing
the duality measure at an Armijo rate.  ``alpha_tilde`` evaluates that bound,
``lemma1_check`` tests the four guaranteed inequalities at a stepped point,
and ``ipm_solve_theory`` runs an interior point loop that enforces the
acceptance conditions explicitly, backtracking no further than alpha_tilde.
"""

from dataclasses import dataclass

import numpy as np

from . import ipkrylov, kernels, linop
from .errors import ConfigError, IterationLimit, ModeError, NumericalBreakdown
from .ipkrylov import InnerContext, residual_only
from .ipm import BarrierTerms, compute_residuals, initial_iterate


def omega_factor(sigma, delta):
    """Guaranteed infeasibility decrease rate for centering weight sigma."""
    return 1.0 - sigma + delta


def alpha_tilde(sigma_min, sigma_max, gamma, delta, m_bound):
    """Uniform step-size floor for accepted directions.

    Minimum of the thresholds below which each of the four guaranteed
    inequalities holds, and 1.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    if not 0.0 < sigma_min <= sigma_max:
        raise ConfigError("need 0 < sigma_min <= sigma_max")
    if sigma_max >= 0.99:
        raise ConfigError("sigma_max must stay below 0.99")
    if not 0.0 < delta <= sigma_min:
        raise ConfigError("need 0 < delta <= sigma_min")
    if m_bound <= 0.0:
        raise ConfigError("m_bound must be positive")
    m2 = m_bound * m_bound
    return min(
        sigma_min * gamma * (1.0 - gamma) / (m2 * (1.0 + gamma * gamma)),
        sigma_min * (1.0 - gamma) / (2.0 * m2),
        (0.99 - sigma_max) / m2,
        delta / m2,
        1.0,
    )


@dataclass
class Lemma1Result:
    lower_products: bool     # stepped products >= gamma * stepped mu
    upper_products: bool     # stepped products <= stepped mu / gamma
    armijo: bool             # stepped mu <= (1 - 0.01 alpha) mu
    total_decrease: bool     # stepped x's >= (1 - omega alpha) x's
    mu_new: float
    mu_old: float

    @property
    def all_hold(self):
        return (self.lower_products and self.upper_products
                and self.armijo and self.total_decrease)


def lemma1_check(x, s, dx, ds, alpha, gamma, sigma, delta):
    """Evaluate the four guaranteed inequalities at the stepped point."""
    x_new = x + alpha * dx
    s_new = s + alpha * ds
    prod = x_new * s_new
    total_new = float(np.sum(prod))
    total_old = float(np.dot(x, s))
    n = x.size
    mu_new = total_new / n
    mu_old = total_old / n
    om = omega_factor(sigma, delta)
    return Lemma1Result(
        lower_products=bool(np.all(prod >= gamma * mu_new * (1.0 - 1e-12))),
        upper_products=bool(np.all(prod <= mu_new / gamma * (1.0 + 1e-12))),
        armijo=mu_new <= (1.0 - 0.01 * alpha) * mu_old * (1.0 + 1e-12),
        total_decrease=total_new >= (1.0 - om * alpha) * total_old * (1.0 - 1e-12),
        mu_new=mu_new,
        mu_old=mu_old,
    )


def in_neighborhood(x, s, res_norms, res0_norms, mu0, gamma, beta_nbhd):
    """Wide product neighborhood with infeasibility tied to the duality gap."""
    prod = x * s
    if prod.size == 0:
        return False
    mu = float(np.mean(prod))
    if mu <= 0.0:
        return False
    if np.min(prod) < gamma * mu or np.max(prod) > mu / gamma:
        return False
    bound = beta_nbhd * mu / mu0
    for rn, rn0 in zip(res_norms, res0_norms):
        if rn > rn0 * bound + 1e-14:
            return False
    return True


# interface aliases with the membership test split out as plain booleans
neighborhood_check = in_neighborhood


def lemma1_inequalities(x, s, dx, ds, alpha, sigma, gamma, delta):
    """The four guaranteed inequalities as a tuple of booleans."""
    r = lemma1_check(x, s, dx, ds, alpha, gamma, sigma, delta)
    return (r.lower_products, r.upper_products, r.armijo, r.total_decrease)


def theoretical_accept(m_x, m_s, p_new, d_new, p_norm, d_norm, omega, alpha_hat,
                       m_bound):
    """Direction acceptance: bounded relative steps and contracted residuals."""
    shrink = 1.0 - omega * alpha_hat
    slack = 1e-12
    return (m_x <= m_bound and m_s <= m_bound
            and p_new <= shrink * p_norm + slack
            and d_new <= shrink * d_norm + slack)


@dataclass
class TheoryConfig:
    gamma: float = 1e-3
    beta_nbhd: float = 1e4
    sigma_min: float = 0.1
    sigma_max: float = 0.9
    sigma: float = 0.5
    delta: float = 0.05
    m_bound: float = 1e3
    tol_mu: float = 1e-6
    tol_p: float = 1e-6
    tol_d: float = 1e-6
    max_iter: int = 300
    inner_tol0: float = 1e-2
    backtrack: float = 0.9


@dataclass
class TheoryIterStats:
    ipm_iter: int
    inner_its: int
    inner_tol: float
    alpha: float
    mu: float


@dataclass
class TheoryResult:
    iterate: object
    converged: bool
    iterations: int
    mu: float
    inner_total: int
    stats: list


def ipm_solve_theory(problem, tcfg=None):
    """Interior point loop with explicit direction acceptance and a step floor.

    Restricted to LPs over the nonnegative orthant with equality rows; the
    inner tolerance is tightened until the acceptance conditions hold, then
    the step is backtracked from the largest feasible length no further than
    ``alpha_tilde``.  One common step length is used for all blocks.
    """
    tcfg = tcfg if tcfg is not None else TheoryConfig()
    if not (problem.is_lp and problem.m > 0 and problem.bounds.simple):
        raise ModeError("the safeguarded loop needs an LP over x >= 0 with rows")
    if not tcfg.sigma_min <= tcfg.sigma <= tcfg.sigma_max:
        raise ConfigError("sigma must lie in [sigma_min, sigma_max]")
    a_floor = alpha_tilde(tcfg.sigma_min, tcfg.sigma_max, tcfg.gamma, tcfg.delta,
                          tcfg.m_bound)
    om = omega_factor(tcfg.sigma, tcfg.delta)
    bounds = problem.bounds
    iterate = initial_iterate(problem)
    b_den = max(float(np.linalg.norm(problem.b)), 1.0)
    c_den = max(float(np.linalg.norm(problem.c)), 1.0)

    mu0 = None
    res0_norms = None
    stats = []
    inner_total = 0
    converged = False
    for k in range(1, tcfg.max_iter + 1):
        bt = BarrierTerms(bounds, iterate)
        res = compute_residuals(problem, iterate, bt, tcfg.sigma)
        p_norm = float(np.linalg.norm(res.r_p))
        d_norm = float(np.linalg.norm(res.r_d))
        if mu0 is None:
            mu0 = bt.mu
            res0_norms = (max(p_norm, 1e-30), max(d_norm, 1e-30))
        if (p_norm / b_den <= tcfg.tol_p and d_norm / c_den <= tcfg.tol_d
                and bt.mu <= tcfg.tol_mu):
            converged = True
            break

        theta = bt.theta
        # inner solve, tightened until the direction is acceptable
        tol = tcfg.inner_tol0
        accepted = False
        inner_here = 0
        while True:
            ctx = InnerContext(bt, res, es=residual_only(tol))
            v2 = theta * (ctx.v1 - res.r_d)
            rhs = res.r_p - problem.a_op.apply(v2)
            out = ipkrylov.ipcg_solve(problem.a_op, theta, _precond(problem, bt),
                                      rhs, ctx)
            inner_here += out.iterations
            d = out.direction
            alpha_hat = min(d.alpha_x, d.alpha_s)
            p_new = kernels.axpby_norm(res.r_p, alpha_hat, d.a_dx)
            d_new = kernels.axpby_norm(res.r_d, alpha_hat, d.at_dy + d.ds)
            accepted = theoretical_accept(d.m_x, d.m_s, p_new, d_new,
                                          p_norm, d_norm, om, alpha_hat,
                                          tcfg.m_bound)
            if accepted or tol <= 1e-14:
                break
            tol *= 1e-2
        inner_total += inner_here
        if not accepted:
            raise NumericalBreakdown("no acceptable direction at machine precision")

        # backtrack a single common step length, never below the floor
        alpha = alpha_hat
        while True:
            ok = _step_ok(problem, iterate, d, alpha, bt.mu, mu0, res0_norms, tcfg)
            if ok:
                break
            if alpha <= a_floor:
                raise NumericalBreakdown("guaranteed step failed the neighborhood test")
            alpha = max(alpha * tcfg.backtrack, a_floor)
        iterate.x += alpha * d.dx
        iterate.y += alpha * d.dy
        iterate.zl += alpha * d.dzl
        stats.append(TheoryIterStats(k, inner_here, tol, alpha, bt.mu))

    if not converged:
        err = IterationLimit("no convergence in %d iterations" % tcfg.max_iter)
        err.stats = stats
        raise err
    return TheoryResult(iterate=iterate, converged=True, iterations=len(stats),
                        mu=bt.mu, inner_total=inner_total, stats=stats)


def _precond(problem, bt):
    if problem.precond_factory is not None:
        return problem.precond_factory(problem, bt)
    return linop.IdentityOperator(problem.m)


def _step_ok(problem, iterate, d, alpha, mu_old, mu0, res0_norms, tcfg):
    x_new = iterate.x + alpha * d.dx
    s_new = iterate.zl + alpha * d.dzl
    if np.any(x_new <= 0.0) or np.any(s_new <= 0.0):
        return False
    mu_new = float(np.dot(x_new, s_new)) / x_new.size
    if mu_new > (1.0 - 0.01 * alpha) * mu_old:
        return False
    y_new = iterate.y + alpha * d.dy
    r_p = problem.b - problem.a_op.apply(x_new)
    r_d = problem.c - problem.a_op.apply_adjoint(y_new) - s_new
    return in_neighborhood(x_new, s_new,
                           (float(np.linalg.norm(r_p)), float(np.linalg.norm(r_d))),
                           res0_norms, mu0, tcfg.gamma, tcfg.beta_nbhd)
