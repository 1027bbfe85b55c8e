import numpy as np
import pytest

from ipstop import linop
from ipstop.errors import IndefinitenessError
from ipstop.krylov import StopReason, minres, pcg


def random_spd(rng, n, spread=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    vals = np.exp(rng.uniform(-spread, spread, n))
    return (q * vals) @ q.T


class TestPcg:
    def test_identity_operator_one_iteration(self, rng):
        b = rng.standard_normal(6)
        out = pcg(linop.IdentityOperator(6), linop.IdentityOperator(6), b, tol=1e-12)
        assert out.iterations == 1
        np.testing.assert_allclose(out.x, b, rtol=1e-14)

    def test_exact_preconditioner_one_iteration(self, rng):
        mat = random_spd(rng, 12)
        op = linop.DenseOperator(mat)
        out = pcg(op, linop.factorize_spd(mat), rng.standard_normal(12), tol=1e-10)
        assert out.iterations == 1

    def test_matches_dense_solve(self, rng):
        mat = random_spd(rng, 20)
        b = rng.standard_normal(20)
        out = pcg(linop.DenseOperator(mat), linop.IdentityOperator(20), b, tol=1e-12)
        assert out.stop_reason == StopReason.RESIDUAL_TOL
        np.testing.assert_allclose(out.x, np.linalg.solve(mat, b),
                                   rtol=1e-8, atol=1e-10)

    def test_indefinite_operator_detected(self, rng):
        mat = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(IndefinitenessError):
            pcg(linop.DenseOperator(mat), linop.IdentityOperator(3),
                np.ones(3), tol=1e-12)

    def test_zero_rhs(self):
        out = pcg(linop.IdentityOperator(4), linop.IdentityOperator(4), np.zeros(4))
        assert out.iterations == 0
        assert out.relres == 0.0

    def test_warm_start_still_converges_to_solution(self, rng):
        mat = random_spd(rng, 15)
        b = rng.standard_normal(15)
        out = pcg(linop.DenseOperator(mat), linop.IdentityOperator(15), b,
                  x0=rng.standard_normal(15), tol=1e-12)
        np.testing.assert_allclose(out.x, np.linalg.solve(mat, b),
                                   rtol=1e-8, atol=1e-10)


class TestMinres:
    def test_diagonal_indefinite(self):
        op = linop.DiagonalOperator(np.array([1.0, -1.0]))
        # DiagonalOperator rejects negatives for solve use; wrap as dense
        op = linop.DenseOperator(np.diag([1.0, -1.0]))
        out = minres(op, linop.IdentityOperator(2), np.array([1.0, 1.0]),
                     tol=1e-12)
        assert out.iterations <= 2
        np.testing.assert_allclose(out.x, [1.0, -1.0], rtol=1e-12, atol=1e-13)

    def test_saddle_system_matches_dense(self, rng):
        n, m = 12, 5
        h = random_spd(rng, n)
        a = rng.standard_normal((m, n))
        kkt = np.block([[-h, a.T], [a, np.zeros((m, m))]])
        b = rng.standard_normal(n + m)
        out = minres(linop.DenseOperator(kkt), linop.IdentityOperator(n + m), b,
                     tol=1e-12, itmax=2000)
        np.testing.assert_allclose(out.x, np.linalg.solve(kkt, b),
                                   rtol=1e-8, atol=1e-9)

    def test_preconditioned_residual_monotone(self, rng):
        n = 30
        mat = random_spd(rng, n)
        mat[: n // 2] *= -1.0
        mat = 0.5 * (mat + mat.T)
        op = linop.DenseOperator(mat)
        b = rng.standard_normal(n)
        norms = []
        minres(op, linop.IdentityOperator(n), b, tol=1e-13, itmax=400,
               callback=lambda it, x: norms.append(np.linalg.norm(b - mat @ x)))
        norms = np.array(norms)
        # the minimized quantity never increases (tiny rounding slack)
        assert np.all(norms[1:] <= norms[:-1] * (1.0 + 1e-10))

    def test_agrees_with_pcg_on_spd(self, rng):
        mat = random_spd(rng, 25)
        op = linop.DenseOperator(mat)
        b = rng.standard_normal(25)
        x1 = pcg(op, linop.IdentityOperator(25), b, tol=1e-12).x
        x2 = minres(op, linop.IdentityOperator(25), b, tol=1e-12, itmax=500).x
        np.testing.assert_allclose(x1, x2, rtol=1e-7, atol=1e-9)

    def test_spd_preconditioner_required(self, rng):
        n = 8
        mat = np.diag(np.arange(1.0, n + 1.0))
        mat[0, 0] = -1.0

        class BadPrecond(linop.LinearOperator):
            def __init__(self):
                super().__init__((n, n))

            def solve(self, v):
                out = np.array(v)
                out[0] *= -1.0
                return out

        from ipstop.errors import NotSpdPreconditionerError
        with pytest.raises(NotSpdPreconditionerError):
            minres(linop.DenseOperator(mat), BadPrecond(), np.ones(n), tol=1e-12)
