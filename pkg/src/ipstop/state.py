"""Iterate state and barrier bookkeeping for bounded variables.

Variables carry independent lower and upper bounds (either may be infinite).
All dual multipliers and complementarity products live on the compact index
sets of finite bounds; helpers here translate between compact and full-length
vectors and evaluate the quantities both the outer iteration and the
instrumented inner solvers need: slacks, the barrier diagonal, step lengths
to the boundary, relative step ratios and the stepped duality measure.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, ModeError


class Bounds:
    """Finite-bound index structure for a box ``lower <= x <= upper``."""

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionError("lower/upper must be 1-d arrays of equal length")
        if np.any(lower >= upper):
            raise DimensionError("need lower < upper componentwise")
        self.lower = lower
        self.upper = upper
        self.n = lower.size
        has_lo = np.isfinite(lower)
        has_hi = np.isfinite(upper)
        self.simple = bool(np.all(lower == 0.0) and not np.any(has_hi))
        if self.simple:
            # fast path: every variable is x >= 0, gathers become views
            self.idx_lo = slice(None)
            self.idx_hi = np.empty(0, dtype=np.intp)
        else:
            self.idx_lo = np.flatnonzero(has_lo)
            self.idx_hi = np.flatnonzero(has_hi)
        self.n_lo = self.n if self.simple else self.idx_lo.size
        self.n_hi = self.idx_hi.size
        self.n_duals = self.n_lo + self.n_hi
        self.has_free = bool(np.any(~has_lo & ~has_hi))
        if self.n_duals == 0:
            raise DimensionError("problem has no finite bounds at all")

    def lower_compact(self):
        return self.lower if self.simple else self.lower[self.idx_lo]

    def upper_compact(self):
        return self.upper[self.idx_hi]

    def scatter(self, lo_vals, hi_vals):
        """Full-length combination scatter(lo) - scatter(hi)."""
        if self.simple:
            return lo_vals.copy()
        out = np.zeros(self.n)
        out[self.idx_lo] = lo_vals
        if self.n_hi:
            out[self.idx_hi] -= hi_vals
        return out


@dataclass
class Iterate:
    """Primal-dual point: x, equality multipliers y, bound multipliers zl/zh.

    ``zl``/``zh`` are stored compactly on the finite lower/upper index sets.
    """

    x: np.ndarray
    y: np.ndarray
    zl: np.ndarray
    zh: np.ndarray

    def copy(self):
        return Iterate(self.x.copy(), self.y.copy(), self.zl.copy(), self.zh.copy())


@dataclass
class Residuals:
    """Outer KKT residuals at an iterate for a given centering weight sigma.

    r_mu_lo/r_mu_hi are the complementarity targets sigma*mu - slack*z on
    the compact bound sets.
    """

    r_p: np.ndarray
    r_d: np.ndarray
    r_mu_lo: np.ndarray
    r_mu_hi: np.ndarray
    mu: float
    sigma: float

    @property
    def r_mu(self):
        # single complementarity block in the nonnegative-orthant case
        if self.r_mu_hi.size:
            raise ModeError("r_mu is only defined when no upper bounds are present")
        return self.r_mu_lo


class BarrierTerms:
    """Per-iterate barrier quantities on the finite-bound index sets."""

    def __init__(self, bounds, iterate):
        self.bounds = bounds
        x = iterate.x
        if bounds.simple:
            self.slack_lo = x
            self.slack_hi = np.empty(0)
        else:
            self.slack_lo = x[bounds.idx_lo] - bounds.lower_compact()
            self.slack_hi = bounds.upper_compact() - x[bounds.idx_hi]
        self.zl = iterate.zl
        self.zh = iterate.zh
        dots = float(np.dot(self.slack_lo, self.zl))
        if bounds.n_hi:
            dots += float(np.dot(self.slack_hi, self.zh))
        self.mu = dots / bounds.n_duals
        if bounds.simple:
            self.theta_inv = self.zl / self.slack_lo
        else:
            self.theta_inv = np.zeros(bounds.n)
            self.theta_inv[bounds.idx_lo] += self.zl / self.slack_lo
            if bounds.n_hi:
                self.theta_inv[bounds.idx_hi] += self.zh / self.slack_hi

    @property
    def theta(self):
        if self.bounds.has_free:
            raise ModeError("theta is singular with free variables; use the augmented form")
        return 1.0 / self.theta_inv

    def complementarity_rhs(self, sigma):
        r_mu_lo = sigma * self.mu - self.slack_lo * self.zl
        if self.bounds.n_hi:
            r_mu_hi = sigma * self.mu - self.slack_hi * self.zh
        else:
            r_mu_hi = np.empty(0)
        return r_mu_lo, r_mu_hi

    def v1_full(self, r_mu_lo, r_mu_hi):
        """Reduced complementarity vector: the bound-dual part folded into x-space."""
        lo = r_mu_lo / self.slack_lo
        hi = r_mu_hi / self.slack_hi if self.bounds.n_hi else None
        if self.bounds.simple:
            return lo
        out = np.zeros(self.bounds.n)
        out[self.bounds.idx_lo] = lo
        if self.bounds.n_hi:
            out[self.bounds.idx_hi] -= hi
        return out

    def eliminate(self, r_mu_lo, r_mu_hi, dx):
        """Bound-dual directions implied by dx through the linearized products."""
        dx_lo = dx[self.bounds.idx_lo]
        dzl = (r_mu_lo - self.zl * dx_lo) / self.slack_lo
        if self.bounds.n_hi:
            dx_hi = dx[self.bounds.idx_hi]
            dzh = (r_mu_hi + self.zh * dx_hi) / self.slack_hi
        else:
            dzh = np.empty(0)
        return dzl, dzh

    def max_steps(self, dx, dzl, dzh):
        """Largest alpha_x, alpha_s keeping slacks and duals positive."""
        ax = kernels.step_to_boundary(self.slack_lo, dx[self.bounds.idx_lo])
        if self.bounds.n_hi:
            ax = min(ax, kernels.step_to_boundary(self.slack_hi, -dx[self.bounds.idx_hi]))
        a_s = kernels.step_to_boundary(self.zl, dzl)
        if self.bounds.n_hi:
            a_s = min(a_s, kernels.step_to_boundary(self.zh, dzh))
        return ax, a_s

    def practical_steps(self, dx, dzl, dzh, factor=0.995):
        ax, a_s = self.max_steps(dx, dzl, dzh)
        return min(1.0, factor * ax), min(1.0, factor * a_s)

    def indicator_steps(self, dx, dzl, dzh, factor=0.995):
        """Boundary fractions without the unit cap, for indicator estimates.

        The actual update never steps past the Newton point, but clamping the
        estimate to 1 erases the residual footprint of any direction whose
        blocking ratio sits just below 1: the stepped infeasibility collapses
        onto the inner residual and never stagnates.  The uncapped fraction
        keeps a |1 - alpha| floor visible whenever a bound is in play.
        """
        ax, a_s = self.max_steps(dx, dzl, dzh)
        return (factor * ax if math.isfinite(ax) else 1.0,
                factor * a_s if math.isfinite(a_s) else 1.0)

    def step_ratios(self, dx, dzl, dzh):
        """max |dx_j|/slack_j and max |dz_j|/z_j over the finite-bound sets."""
        mx = kernels.max_abs_ratio(dx[self.bounds.idx_lo], self.slack_lo)
        if self.bounds.n_hi:
            mx = max(mx, kernels.max_abs_ratio(dx[self.bounds.idx_hi], self.slack_hi))
        ms = kernels.max_abs_ratio(dzl, self.zl)
        if self.bounds.n_hi:
            ms = max(ms, kernels.max_abs_ratio(dzh, self.zh))
        return mx, ms

    def stepped_mu(self, dx, dzl, dzh, alpha_x, alpha_s):
        """Duality measure of the trial point (x + alpha_x dx, z + alpha_s dz)."""
        total = kernels.stepped_dot(
            self.slack_lo, np.ascontiguousarray(dx[self.bounds.idx_lo]), alpha_x,
            self.zl, dzl, alpha_s)
        if self.bounds.n_hi:
            total += kernels.stepped_dot(
                self.slack_hi, np.ascontiguousarray(-dx[self.bounds.idx_hi]), alpha_x,
                self.zh, dzh, alpha_s)
        return total / self.bounds.n_duals
