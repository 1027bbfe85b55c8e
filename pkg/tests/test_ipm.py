"""Outer interior point driver: residuals, assembly, mode selection,
convergence against an independent dense reference, and stats output."""

import numpy as np
import pytest

from genprob import as_instance, random_lp, random_qp
from reference_ipm import solve_reference
from ipstop import ipm, linop
from ipstop.errors import ConfigError, IterationLimit, ModeError
from ipstop.ipkrylov import InnerContext, ipcg_solve, residual_only
from ipstop.ipm import (FixTol, IndicatorStop, IpmConfig, ProblemInstance,
                        VarTol, choose_mode, choose_sigma, initial_iterate,
                        write_stats_csv)
from ipstop.state import BarrierTerms, Iterate


def tiny_lp():
    """min x subject to x = 1, x >= 0."""
    return ProblemInstance(c=np.array([1.0]),
                           a_op=linop.DenseOperator(np.array([[1.0]])),
                           b=np.array([1.0]), lower=np.zeros(1),
                           upper=np.array([np.inf]))


def test_residuals_hand_value():
    prob = ProblemInstance(c=np.array([1.0]),
                           a_op=linop.DenseOperator(np.array([[1.0]])),
                           b=np.array([2.0]), lower=np.zeros(1),
                           upper=np.array([np.inf]))
    it = Iterate(np.array([1.0]), np.zeros(1), np.array([1.0]), np.empty(0))
    bt = BarrierTerms(prob.bounds, it)
    res = ipm.compute_residuals(prob, it, bt, 0.5)
    assert res.r_p[0] == 1.0        # b - Ax = 2 - 1
    assert res.r_d[0] == 0.0        # c - A'y - z = 1 - 0 - 1
    assert res.mu == 1.0
    assert res.r_mu_lo[0] == -0.5   # sigma*mu - x*z


class TestStartingPoint:
    def test_nonnegative_orthant(self):
        prob = as_instance(random_lp(np.random.default_rng(0), 4, 9))
        scale = max(1.0, np.abs(prob.c).max(), np.abs(prob.b).max())
        it = initial_iterate(prob)
        np.testing.assert_array_equal(it.x, np.full(9, scale))
        np.testing.assert_array_equal(it.zl, np.full(9, scale))
        assert it.zh.size == 0
        np.testing.assert_array_equal(it.y, np.zeros(4))

    def test_box_starts_at_midpoint(self):
        lower = np.array([-1.0, 0.0])
        upper = np.array([3.0, 10.0])
        prob = ProblemInstance(c=np.zeros(2),
                               q_op=linop.DenseOperator(np.eye(2)),
                               lower=lower, upper=upper)
        it = initial_iterate(prob)
        np.testing.assert_array_equal(it.x, [1.0, 5.0])

    def test_one_sided_offsets_by_scale(self):
        lower = np.array([2.0, -np.inf])
        upper = np.array([np.inf, 5.0])
        prob = ProblemInstance(c=np.array([3.0, 0.5]),
                               q_op=linop.DenseOperator(np.eye(2)),
                               lower=lower, upper=upper)
        it = initial_iterate(prob)
        np.testing.assert_array_equal(it.x, [2.0 + 3.0, 5.0 - 3.0])


class TestChooseMode:
    def test_auto_lp_is_normal(self):
        assert choose_mode(tiny_lp(), "auto") == "normal"

    def test_auto_qp_with_rows_is_augmented(self, rng):
        prob = as_instance(random_qp(rng, n=10, m=3))
        assert choose_mode(prob, "auto") == "augmented"

    def test_auto_qp_without_rows_is_normal(self, rng):
        prob = as_instance(random_qp(rng, n=10, m=0))
        assert choose_mode(prob, "auto") == "normal"

    def test_normal_rejects_qp_with_rows(self, rng):
        prob = as_instance(random_qp(rng, n=10, m=3))
        with pytest.raises(ModeError):
            choose_mode(prob, "normal")

    def test_augmented_needs_rows(self, rng):
        prob = as_instance(random_qp(rng, n=10, m=0))
        with pytest.raises(ModeError):
            choose_mode(prob, "augmented")

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            choose_mode(tiny_lp(), "fancy")


def test_choose_sigma_cubes_and_clamps():
    assert choose_sigma(0.1, 1.0, 1e-8, 0.9) == pytest.approx(1e-3)
    assert choose_sigma(1e-4, 1.0, 1e-4, 0.9) == 1e-4     # floor binds
    assert choose_sigma(2.0, 1.0, 1e-4, 0.9) == 0.9       # cap binds
    assert choose_sigma(-0.5, 1.0, 1e-4, 0.9) == 1e-4     # negative mu_aff


class TestAssembleNormal:
    def test_one_by_one_operator_value(self):
        prob = tiny_lp()
        it = Iterate(np.array([1.0]), np.zeros(1), np.array([0.5]), np.empty(0))
        bt = BarrierTerms(prob.bounds, it)     # theta = x / z = 2
        res = ipm.compute_residuals(prob, it, bt, 0.5)
        op, rhs = ipm.assemble_normal_equations(prob, bt, res)
        assert op.apply(np.array([1.0]))[0] == pytest.approx(2.0)

    def test_matches_dense_and_rhs_formula(self, rng):
        prob = as_instance(random_lp(rng, 7, 19))
        it = initial_iterate(prob)
        it.x *= rng.uniform(0.5, 2.0, prob.n)
        bt = BarrierTerms(prob.bounds, it)
        res = ipm.compute_residuals(prob, it, bt, 0.3)
        op, rhs = ipm.assemble_normal_equations(prob, bt, res)
        a = prob.a_op.to_dense()
        dense = a @ np.diag(bt.theta) @ a.T
        for _ in range(20):
            v = rng.standard_normal(prob.m)
            np.testing.assert_allclose(op.apply(v), dense @ v,
                                       rtol=1e-12, atol=1e-12)
        v1 = bt.v1_full(res.r_mu_lo, res.r_mu_hi)
        rhs_ref = res.r_p - a @ (bt.theta * (v1 - res.r_d))
        np.testing.assert_allclose(rhs, rhs_ref, rtol=1e-12, atol=1e-14)

    def test_qp_without_rows_is_shifted_operator(self, rng):
        prob = as_instance(random_qp(rng, n=8, m=0))
        it = initial_iterate(prob)
        bt = BarrierTerms(prob.bounds, it)
        res = ipm.compute_residuals(prob, it, bt, 0.5)
        op, rhs = ipm.assemble_normal_equations(prob, bt, res)
        q = prob.q_op.to_dense()
        dense = q + np.diag(bt.theta_inv)
        v = rng.standard_normal(prob.n)
        np.testing.assert_allclose(op.apply(v), dense @ v, rtol=1e-12)
        v1 = bt.v1_full(res.r_mu_lo, res.r_mu_hi)
        np.testing.assert_allclose(rhs, v1 - res.r_d, rtol=0, atol=0)

    def test_qp_with_rows_rejected(self, rng):
        prob = as_instance(random_qp(rng, n=8, m=3))
        it = initial_iterate(prob)
        bt = BarrierTerms(prob.bounds, it)
        res = ipm.compute_residuals(prob, it, bt, 0.5)
        with pytest.raises(ModeError):
            ipm.assemble_normal_equations(prob, bt, res)


def test_assemble_augmented_symmetry(rng):
    prob = as_instance(random_qp(rng, n=14, m=5))
    it = initial_iterate(prob)
    bt = BarrierTerms(prob.bounds, it)
    res = ipm.compute_residuals(prob, it, bt, 0.5)
    op, rhs = ipm.assemble_augmented(prob, bt, res)
    size = prob.n + prob.m
    for _ in range(15):
        u = rng.standard_normal(size)
        v = rng.standard_normal(size)
        left = np.dot(u, op.apply(v))
        right = np.dot(op.apply(u), v)
        scale = max(1.0, abs(left), abs(right))
        assert abs(left - right) <= 1e-12 * scale
    v1 = bt.v1_full(res.r_mu_lo, res.r_mu_hi)
    np.testing.assert_allclose(rhs[:prob.n], res.r_d - v1, rtol=0, atol=0)
    np.testing.assert_allclose(rhs[prob.n:], res.r_p, rtol=0, atol=0)


def test_tiny_lp_solution():
    result = ipm.ipm_solve(tiny_lp(), IpmConfig(policy=FixTol(1e-10)))
    assert result.converged
    assert result.iterate.x[0] == pytest.approx(1.0, abs=1e-7)
    assert result.objective == pytest.approx(1.0, abs=1e-7)


class TestAgainstReference:
    """Exact inner solves must land on the same optimum as a dense
    predictor-corrector reference."""

    def _check(self, data, tol=1e-8):
        prob = as_instance(data)
        cfg = IpmConfig(tol_p=tol, tol_d=tol, tol_mu=tol,
                        policy=FixTol(1e-14), max_correctors=1)
        result = ipm.ipm_solve(prob, cfg)
        ref = solve_reference(data["c"], q=data["q"], a=data["a"], b=data["b"],
                              lower=data["lower"], upper=data["upper"],
                              tol=1e-10)
        assert result.converged and ref.converged
        scale = max(1.0, abs(ref.objective))
        assert abs(result.objective - ref.objective) <= 1e-6 * scale
        assert result.r_d_rel <= tol and result.mu <= tol
        if prob.m:
            assert result.r_p_rel <= tol

    def test_random_lps(self, rng):
        for _ in range(3):
            self._check(random_lp(rng))

    def test_random_qps(self, rng):
        for _ in range(3):
            self._check(random_qp(rng))


def test_exact_direction_restores_feasibility(rng):
    """From a primal-dual feasible point, an exactly solved Newton step keeps
    both linear residuals at roundoff level after a full unit step."""
    m, n = 6, 15
    a = rng.standard_normal((m, n))
    x0 = rng.uniform(0.5, 2.0, n)
    y0 = rng.standard_normal(m)
    z0 = rng.uniform(0.5, 2.0, n)
    b = a @ x0
    c = a.T @ y0 + z0
    prob = ProblemInstance(c=c, a_op=linop.DenseOperator(a), b=b,
                           lower=np.zeros(n), upper=np.full(n, np.inf))
    it = Iterate(x0.copy(), y0.copy(), z0.copy(), np.empty(0))
    bt = BarrierTerms(prob.bounds, it)
    res = ipm.compute_residuals(prob, it, bt, 0.5)
    assert np.linalg.norm(res.r_p) == 0.0
    assert np.linalg.norm(res.r_d) <= 1e-14 * np.linalg.norm(c)

    op, rhs = ipm.assemble_normal_equations(prob, bt, res)
    ctx = InnerContext(bt, res, es=residual_only(1e-14))
    out = ipcg_solve(prob.a_op, bt.theta, linop.IdentityOperator(m), rhs, ctx)
    d = out.direction
    assert np.linalg.norm(rhs - op.apply(d.dy)) <= 1e-8 * np.linalg.norm(rhs)

    r_p_new = b - a @ (x0 + d.dx)
    r_d_new = c - a.T @ (y0 + d.dy) - (z0 + d.dzl)
    assert np.linalg.norm(r_p_new) <= 1e-10 * (1.0 + np.linalg.norm(b))
    assert np.linalg.norm(r_d_new) <= 1e-10 * (1.0 + np.linalg.norm(c))


def test_final_iterate_strictly_inside_box(rng):
    data = random_qp(rng, n=12, m=4)
    prob = as_instance(data)
    result = ipm.ipm_solve(prob, IpmConfig(policy=FixTol(1e-10)))
    x = result.iterate.x
    assert np.all(x > data["lower"]) and np.all(x < data["upper"])
    assert np.all(result.iterate.zl > 0) and np.all(result.iterate.zh > 0)


def test_iteration_limit_carries_partial_result(rng):
    prob = as_instance(random_lp(rng, 8, 20))
    with pytest.raises(IterationLimit) as err:
        ipm.ipm_solve(prob, IpmConfig(max_iter=2, policy=FixTol(1e-8)))
    assert len(err.value.stats) == 2
    assert err.value.result.converged is False
    assert err.value.result.iterations == 2


class TestCorrectors:
    def test_zero_correctors_single_solve_per_iteration(self, rng):
        prob = as_instance(random_lp(rng, 8, 20))
        cfg = IpmConfig(policy=FixTol(1e-8), max_correctors=0)
        result = ipm.ipm_solve(prob, cfg)
        for s in result.stats:
            assert s.stop_reason in ("residual_tol", "indicators", "max_iter")

    def test_correctors_usually_save_iterations(self):
        wins = 0
        seeds = range(20)
        for seed in seeds:
            r = np.random.default_rng(seed)
            data = random_lp(r, 10, 30)
            base = ipm.ipm_solve(as_instance(data),
                                 IpmConfig(policy=FixTol(1e-10),
                                           max_correctors=0))
            corr = ipm.ipm_solve(as_instance(data),
                                 IpmConfig(policy=FixTol(1e-10),
                                           max_correctors=2))
            if corr.iterations <= base.iterations:
                wins += 1
        assert wins >= 0.7 * len(seeds)


def test_policy_labels_and_inner_configs():
    assert FixTol(1e-6).label() == "fixtol"
    assert VarTol().label() == "vartol"
    assert IndicatorStop().label() == "ipstop"
    es = FixTol(1e-7).inner_config(1.0, 1.0)
    assert es.epsilon == 0.0 and es.tau_inner == 1e-7
    es = VarTol(tol0=1e-3, tolmax=1e-6).inner_config(1e-2, 1.0)
    assert es.tau_inner == pytest.approx(1e-5)
    es = IndicatorStop(epsilon=0.05, itstart=7, tol=1e-6).inner_config(1.0, 1.0)
    assert es.epsilon == 0.05 and es.itstart == 7


def test_stats_csv_schema(tmp_path, rng):
    prob = as_instance(random_lp(rng, 5, 12))
    result = ipm.ipm_solve(prob, IpmConfig(policy=FixTol(1e-8)))
    path = tmp_path / "stats.csv"
    write_stats_csv(result.stats, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "ipm_iter,inner_its,final_relres,alpha_x,alpha_s,mu,rP,rD,stop_reason"
    assert len(lines) == 1 + result.iterations
