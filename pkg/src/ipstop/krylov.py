"""Baseline preconditioned CG and MINRES with residual stopping.

These are the reference arms for the stopping-policy comparisons and the
correctness oracles for the instrumented solvers in :mod:`ipstop.ipkrylov`,
which reproduce the same recurrences with extra bookkeeping.  Operation order
is deliberately identical between the two modules so that iterates match to
roundoff.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BreakdownError, IndefinitenessError, NotSpdPreconditionerError

_EPS = float(np.finfo(np.float64).eps)
_TINY = 1e-300

# Interval (in iterations) at which MINRES recomputes the true preconditioned
# residual norm to guard the phibar estimate against drift.
MINRES_DRIFT_INTERVAL = 50


class StopReason(enum.Enum):
    RESIDUAL_TOL = "residual_tol"
    MAX_ITER = "max_iter"
    INDICATORS = "indicators"


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    relres: float
    stop_reason: StopReason


def pcg(op, precond, rhs, x0=None, tol=1e-8, itmax=None, callback=None):
    """Preconditioned CG on an SPD operator.

    ``precond.solve`` applies the inverse preconditioner.  Stops when
    ||r|| <= tol*||r0||.  Raises :class:`IndefinitenessError` when an inner
    product that must be positive is not.
    """
    n = op.shape[0]
    if itmax is None:
        itmax = 10 * n
    rhs = np.asarray(rhs, dtype=np.float64)
    if x0 is not None and np.any(x0):
        x = np.array(x0, dtype=np.float64)
        r = rhs - op.apply(x)
    else:
        x = np.zeros(n)
        r = rhs.copy()
    r0_norm = np.linalg.norm(r)
    if r0_norm == 0.0:
        return KrylovResult(x, 0, 0.0, StopReason.RESIDUAL_TOL)
    z = precond.solve(r)
    rho = np.dot(r, z)
    if rho <= 0.0:
        raise IndefinitenessError("preconditioned residual product not positive")
    u = z.copy()
    relres = 1.0
    stop = StopReason.MAX_ITER
    iterations = 0
    for it in range(1, itmax + 1):
        iterations = it
        w = op.apply(u)
        denom = np.dot(w, u)
        if denom <= 0.0:
            raise IndefinitenessError("operator is not positive definite")
        alpha = rho / denom
        x += alpha * u
        r -= alpha * w
        relres = np.linalg.norm(r) / r0_norm
        if callback is not None:
            callback(it, x)
        if relres <= tol:
            stop = StopReason.RESIDUAL_TOL
            break
        z = precond.solve(r)
        rho_new = np.dot(r, z)
        if rho_new <= 0.0:
            raise IndefinitenessError("preconditioner is not positive definite")
        beta = rho_new / rho
        u = z + beta * u
        rho = rho_new
    return KrylovResult(x, iterations, float(relres), stop)


def minres(op, precond, rhs, tol=1e-8, itmax=None, callback=None):
    """Preconditioned MINRES on a symmetric (possibly indefinite) operator.

    Starts from zero, minimizes the preconditioned residual norm over the
    Krylov subspace, and stops on the phibar estimate of the relative
    residual, recomputed directly every ``MINRES_DRIFT_INTERVAL`` iterations.
    The preconditioner must be SPD.
    """
    n = op.shape[0]
    if itmax is None:
        itmax = 10 * n
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros(n)
    r1 = rhs.copy()
    y = precond.solve(r1)
    beta1_sq = np.dot(r1, y)
    if beta1_sq < 0.0:
        raise NotSpdPreconditionerError("preconditioner produced negative inner product")
    if beta1_sq == 0.0:
        return KrylovResult(x, 0, 0.0, StopReason.RESIDUAL_TOL)
    beta1 = np.sqrt(beta1_sq)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    relres = 1.0
    stop = StopReason.MAX_ITER
    iterations = 0
    for it in range(1, itmax + 1):
        iterations = it
        if beta < _TINY:
            raise BreakdownError("Lanczos beta vanished before convergence")
        v = y / beta
        y = op.apply(v)
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
        x += phi * w

        if it % MINRES_DRIFT_INTERVAL == 0:
            rt = rhs - op.apply(x)
            phibar = np.sqrt(max(np.dot(rt, precond.solve(rt)), 0.0))
        relres = phibar / beta1
        if callback is not None:
            callback(it, x)
        if relres <= tol:
            stop = StopReason.RESIDUAL_TOL
            break
    return KrylovResult(x, iterations, float(relres), stop)
