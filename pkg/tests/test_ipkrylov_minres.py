"""Instrumented MINRES on the augmented block system: baseline equivalence,
recurrence-tracked products, and corrector shift handling."""

import math

import numpy as np
import pytest

from genprob import as_instance, random_lp, random_qp
from ipstop import ipm, linop
from ipstop.ipkrylov import (EarlyStopConfig, InnerContext,
                             combine_directions, corrector_residual_terms,
                             ipminres_solve, residual_only)
from ipstop.krylov import StopReason, minres
from ipstop.state import BarrierTerms, Residuals


def qp_rows_setup(rng, n=24, m=8, sigma=0.5):
    """Box QP with equality rows at a perturbed interior point."""
    prob = as_instance(random_qp(rng, n=n, m=m, box=True))
    it = ipm.initial_iterate(prob)
    half = 0.5 * (prob.bounds.upper - prob.bounds.lower)
    it.x = it.x + 0.3 * half * rng.uniform(-1.0, 1.0, n)
    it.zl *= rng.uniform(0.5, 2.0, it.zl.size)
    it.zh *= rng.uniform(0.5, 2.0, it.zh.size)
    it.y = 0.1 * rng.standard_normal(m)
    bt = BarrierTerms(prob.bounds, it)
    res = ipm.compute_residuals(prob, it, bt, sigma)
    return prob, bt, res


def lp_setup(rng, m=10, n=30, sigma=0.5):
    prob = as_instance(random_lp(rng, m, n))
    it = ipm.initial_iterate(prob)
    it.x *= rng.uniform(0.5, 2.0, n)
    it.zl *= rng.uniform(0.5, 2.0, n)
    bt = BarrierTerms(prob.bounds, it)
    res = ipm.compute_residuals(prob, it, bt, sigma)
    return prob, bt, res


def dense_augmented(prob, bt):
    n, m = prob.n, prob.m
    q = prob.q_op.to_dense() if prob.q_op is not None else np.zeros((n, n))
    a = prob.a_op.to_dense()
    k = np.zeros((n + m, n + m))
    k[:n, :n] = -(q + np.diag(bt.theta_inv))
    k[:n, n:] = a.T
    k[n:, :n] = a
    return k


class TestBaselineEquivalence:
    @pytest.mark.parametrize("make", ["qp", "lp"])
    def test_iterates_match_minres(self, rng, make):
        for _ in range(5):
            if make == "qp":
                prob, bt, res = qp_rows_setup(rng)
            else:
                prob, bt, res = lp_setup(rng)
            op, rhs = ipm.assemble_augmented(prob, bt, res)
            eye = linop.IdentityOperator(prob.n + prob.m)
            base_iter = []
            minres(op, eye, rhs, tol=1e-10,
                   callback=lambda i, x: base_iter.append(x.copy()))
            inst_iter = []
            ctx = InnerContext(bt, res, es=residual_only(1e-10))
            out = ipminres_solve(op, eye, rhs, ctx,
                                 callback=lambda i, x: inst_iter.append(x.copy()))
            assert len(base_iter) == len(inst_iter)
            for xb, xi in zip(base_iter, inst_iter):
                gap = np.linalg.norm(xb - xi) / max(1.0, np.linalg.norm(xb))
                assert gap <= 1e-13


def test_direction_matches_dense_solve(rng):
    prob, bt, res = qp_rows_setup(rng, n=20, m=6)
    op, rhs = ipm.assemble_augmented(prob, bt, res)
    ctx = InnerContext(bt, res, es=residual_only(1e-13))
    out = ipminres_solve(op, linop.IdentityOperator(prob.n + prob.m), rhs, ctx,
                         itmax=20 * (prob.n + prob.m))
    sol = np.linalg.solve(dense_augmented(prob, bt), rhs)
    d = out.direction
    np.testing.assert_allclose(d.dx, sol[:prob.n], rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(d.dy, sol[prob.n:], rtol=1e-7, atol=1e-9)


def test_tracked_products_and_indicators(rng):
    prob, bt, res = qp_rows_setup(rng, n=18, m=6)
    q = prob.q_op.to_dense()
    a = prob.a_op.to_dense()
    op, rhs = ipm.assemble_augmented(prob, bt, res)
    es = EarlyStopConfig(epsilon=0.0, itstart=1, tau_inner=1e-11)
    ctx = InnerContext(bt, res, es=es)
    iters = []
    out = ipminres_solve(op, linop.IdentityOperator(prob.n + prob.m), rhs, ctx,
                         callback=lambda i, x: iters.append(x.copy()))
    assert len(out.trace) == len(iters)
    lo, hi = prob.bounds.idx_lo, prob.bounds.idx_hi
    for row, xv in zip(out.trace, iters):
        dx, dy = xv[:prob.n], xv[prob.n:]
        dzl, dzh = bt.eliminate(res.r_mu_lo, res.r_mu_hi, dx)
        ds = prob.bounds.scatter(dzl, dzh)
        ax, a_s = bt.indicator_steps(dx, dzl, dzh)
        p_ref = np.linalg.norm(res.r_p - ax * (a @ dx))
        d_ref = np.linalg.norm(res.r_d - a_s * (a.T @ dy + ds) + ax * (q @ dx))
        prod = np.concatenate([(bt.slack_lo + ax * dx[lo]) * (bt.zl + a_s * dzl),
                               (bt.slack_hi - ax * dx[hi]) * (bt.zh + a_s * dzh)])
        mu_ref = prod.sum() / prob.bounds.n_duals
        assert row.p_inf == pytest.approx(p_ref, rel=1e-9, abs=1e-11)
        assert row.d_inf == pytest.approx(d_ref, rel=1e-9, abs=1e-11)
        assert row.mu == pytest.approx(mu_ref, rel=1e-9, abs=1e-13)
    d = out.direction
    np.testing.assert_allclose(d.a_dx, a @ d.dx, rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(d.at_dy, a.T @ d.dy, rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(d.q_dx, q @ d.dx, rtol=1e-9, atol=1e-11)


def test_linearized_complementarity_closes(rng):
    prob, bt, res = qp_rows_setup(rng)
    op, rhs = ipm.assemble_augmented(prob, bt, res)
    ctx = InnerContext(bt, res, es=residual_only(1e-8))
    out = ipminres_solve(op, linop.IdentityOperator(prob.n + prob.m), rhs, ctx)
    d = out.direction
    lo, hi = prob.bounds.idx_lo, prob.bounds.idx_hi
    lhs_lo = bt.zl * d.dx[lo] + bt.slack_lo * d.dzl
    lhs_hi = -bt.zh * d.dx[hi] + bt.slack_hi * d.dzh
    for lhs, target in ((lhs_lo, res.r_mu_lo), (lhs_hi, res.r_mu_hi)):
        scale = max(1.0, np.linalg.norm(target) + np.linalg.norm(lhs))
        assert np.linalg.norm(lhs - target) <= 1e-12 * scale


def test_indicator_stop_fires(rng):
    prob, bt, res = qp_rows_setup(rng, n=40, m=12, sigma=0.0)
    op, rhs = ipm.assemble_augmented(prob, bt, res)
    es = EarlyStopConfig(epsilon=10.0, itstart=2, tau_inner=1e-14, window=3)
    ctx = InnerContext(bt, res, es=es)
    out = ipminres_solve(op, linop.IdentityOperator(prob.n + prob.m), rhs, ctx)
    assert out.stop_reason == StopReason.INDICATORS
    assert out.iterations >= es.itstart + es.window


class TestCorrectorShifts:
    def test_shifted_indicators_measure_combined_direction(self, rng):
        prob, bt, res = qp_rows_setup(rng, n=16, m=5)
        q = prob.q_op.to_dense()
        a = prob.a_op.to_dense()
        op, rhs = ipm.assemble_augmented(prob, bt, res)
        eye = linop.IdentityOperator(prob.n + prob.m)
        base = ipminres_solve(op, eye, rhs,
                              InnerContext(bt, res, es=residual_only(1e-12)))
        shifts = corrector_residual_terms(base.direction)

        t_lo = 0.05 * bt.mu * np.ones(prob.bounds.n_lo)
        t_hi = 0.05 * bt.mu * np.ones(prob.bounds.n_hi)
        corr_res = Residuals(np.zeros(prob.m), np.zeros(prob.n), t_lo, t_hi,
                             bt.mu, res.sigma)
        es = EarlyStopConfig(epsilon=0.0, itstart=1, tau_inner=1e-10)
        ctx = InnerContext(bt, corr_res, outer_res=res, es=es, shifts=shifts)
        op2, rhs2 = ipm.assemble_augmented(prob, bt, corr_res)
        iters = []
        out = ipminres_solve(op2, eye, rhs2, ctx,
                             callback=lambda i, x: iters.append(x.copy()))
        bd = base.direction
        for row, xv in zip(out.trace, iters):
            dx = xv[:prob.n] + bd.dx
            dy = xv[prob.n:] + bd.dy
            dzl, dzh = bt.eliminate(t_lo, t_hi, xv[:prob.n])
            dzl = dzl + bd.dzl
            dzh = dzh + bd.dzh
            ds = prob.bounds.scatter(dzl, dzh)
            ax, a_s = bt.indicator_steps(dx, dzl, dzh)
            p_ref = np.linalg.norm(res.r_p - ax * (a @ dx))
            d_ref = np.linalg.norm(res.r_d - a_s * (a.T @ dy + ds) + ax * (q @ dx))
            assert row.p_inf == pytest.approx(p_ref, rel=1e-8, abs=1e-10)
            assert row.d_inf == pytest.approx(d_ref, rel=1e-8, abs=1e-10)

        combined = combine_directions(bd, out.direction)
        np.testing.assert_allclose(combined.a_dx, a @ combined.dx,
                                   rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(combined.at_dy, a.T @ combined.dy,
                                   rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(combined.q_dx, q @ combined.dx,
                                   rtol=1e-9, atol=1e-11)

    def test_shift_terms_content(self, rng):
        prob, bt, res = qp_rows_setup(rng, n=12, m=4)
        op, rhs = ipm.assemble_augmented(prob, bt, res)
        eye = linop.IdentityOperator(prob.n + prob.m)
        out = ipminres_solve(op, eye, rhs,
                             InnerContext(bt, res, es=residual_only(1e-10)))
        d = out.direction
        sh = corrector_residual_terms(d)
        np.testing.assert_array_equal(sh.dx, d.dx)
        np.testing.assert_array_equal(sh.primal, d.a_dx)
        np.testing.assert_allclose(sh.dual, d.at_dy + d.ds, rtol=0, atol=0)
        np.testing.assert_array_equal(sh.quad, d.q_dx)
