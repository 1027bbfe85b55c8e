"""Matrix-free linear operators, SPD factorization, and Matrix Market IO.

Operators expose ``apply`` / ``apply_adjoint`` on 1-D float64 arrays and are
composed structurally (sums, scalings, 2x2 Kronecker blocks, Gram products,
saddle-point blocks).  Preconditioners are operators that additionally expose
``solve`` (application of the inverse).
"""

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import CapabilityError, DimensionError, NotPositiveDefiniteError

__all__ = [
    "LinearOperator",
    "IdentityOperator",
    "ZeroOperator",
    "DiagonalOperator",
    "DenseOperator",
    "CsrOperator",
    "ScaledOperator",
    "SumOperator",
    "GramOperator",
    "Kron2Operator",
    "BlockRowOperator",
    "BlockDiagOperator",
    "ShiftedOperator",
    "NormalEqOperator",
    "AugmentedOperator",
    "Block2x2DiagPrecond",
    "CountingOperator",
    "SpdFactorization",
    "apply",
    "apply_adjoint",
    "factorize_spd",
    "as_operator",
    "write_matrix_market",
    "read_matrix_market",
]


def _asvec(v, n, what="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != n:
        raise DimensionError(f"{what} has shape {v.shape}, expected ({n},)")
    return v


class LinearOperator:
    """Base class: a real operator mapping R^n_in -> R^n_out."""

    symmetric = False

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))

    def apply(self, v):
        raise NotImplementedError

    def apply_adjoint(self, u):
        if self.symmetric:
            return self.apply(u)
        raise CapabilityError(f"{type(self).__name__} has no adjoint")

    def to_dense(self):
        """Dense matrix by columns; intended for tests and small probes."""
        m, n = self.shape
        out = np.empty((m, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out


class IdentityOperator(LinearOperator):
    symmetric = True

    def __init__(self, n):
        super().__init__((n, n))

    def apply(self, v):
        return _asvec(v, self.shape[1]).copy()

    def solve(self, v):
        return _asvec(v, self.shape[1]).copy()


class ZeroOperator(LinearOperator):
    symmetric = True

    def __init__(self, n):
        super().__init__((n, n))

    def apply(self, v):
        _asvec(v, self.shape[1])
        return np.zeros(self.shape[0])


class DiagonalOperator(LinearOperator):
    symmetric = True

    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=np.float64)
        if self.diag.ndim != 1:
            raise DimensionError("diagonal must be 1-D")
        super().__init__((self.diag.size, self.diag.size))

    def apply(self, v):
        return self.diag * _asvec(v, self.shape[1])

    def solve(self, v):
        return _asvec(v, self.shape[1]) / self.diag


class DenseOperator(LinearOperator):
    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=np.float64)
        if self.mat.ndim != 2:
            raise DimensionError("matrix must be 2-D")
        super().__init__(self.mat.shape)
        self.symmetric = self.mat.shape[0] == self.mat.shape[1] and np.array_equal(
            self.mat, self.mat.T
        )

    def apply(self, v):
        return self.mat @ _asvec(v, self.shape[1])

    def apply_adjoint(self, u):
        return self.mat.T @ _asvec(u, self.shape[0])

    def to_dense(self):
        return self.mat.copy()


class CsrOperator(LinearOperator):
    def __init__(self, mat, symmetric=False):
        self.mat = scipy.sparse.csr_matrix(mat).astype(np.float64)
        super().__init__(self.mat.shape)
        self.symmetric = symmetric
        self._mat_t = None

    def apply(self, v):
        return self.mat @ _asvec(v, self.shape[1])

    def apply_adjoint(self, u):
        if self.symmetric:
            return self.mat @ _asvec(u, self.shape[0])
        if self._mat_t is None:
            self._mat_t = self.mat.T.tocsr()
        return self._mat_t @ _asvec(u, self.shape[0])

    def to_dense(self):
        return self.mat.toarray()


class ScaledOperator(LinearOperator):
    def __init__(self, scale, op):
        self.scale = float(scale)
        self.op = op
        super().__init__(op.shape)
        self.symmetric = op.symmetric

    def apply(self, v):
        return self.scale * self.op.apply(v)

    def apply_adjoint(self, u):
        return self.scale * self.op.apply_adjoint(u)


class SumOperator(LinearOperator):
    def __init__(self, ops):
        ops = list(ops)
        shape = ops[0].shape
        for op in ops[1:]:
            if op.shape != shape:
                raise DimensionError("summands have mismatched shapes")
        self.ops = ops
        super().__init__(shape)
        self.symmetric = all(op.symmetric for op in ops)

    def apply(self, v):
        out = self.ops[0].apply(v)
        for op in self.ops[1:]:
            out += op.apply(v)
        return out

    def apply_adjoint(self, u):
        out = self.ops[0].apply_adjoint(u)
        for op in self.ops[1:]:
            out += op.apply_adjoint(u)
        return out


class GramOperator(LinearOperator):
    """B = A^T A applied matrix-free (two products with A)."""

    symmetric = True

    def __init__(self, a_op):
        self.a_op = a_op
        n = a_op.shape[1]
        super().__init__((n, n))

    def apply(self, v):
        return self.a_op.apply_adjoint(self.a_op.apply(v))


class Kron2Operator(LinearOperator):
    """(C kron B) for a 2x2 coefficient block C and a square operator B."""

    def __init__(self, coeffs, b_op):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        if self.coeffs.shape != (2, 2):
            raise DimensionError("coefficient block must be 2x2")
        self.b_op = b_op
        nb = b_op.shape[1]
        if b_op.shape[0] != nb:
            raise DimensionError("Kronecker factor must be square")
        super().__init__((2 * nb, 2 * nb))
        self.symmetric = b_op.symmetric and self.coeffs[0, 1] == self.coeffs[1, 0]

    def apply(self, v):
        v = _asvec(v, self.shape[1])
        nb = self.b_op.shape[1]
        t1 = self.b_op.apply(v[:nb])
        t2 = self.b_op.apply(v[nb:])
        c = self.coeffs
        return np.concatenate((c[0, 0] * t1 + c[0, 1] * t2, c[1, 0] * t1 + c[1, 1] * t2))

    def apply_adjoint(self, u):
        u = _asvec(u, self.shape[0])
        nb = self.b_op.shape[1]
        t1 = self.b_op.apply_adjoint(u[:nb])
        t2 = self.b_op.apply_adjoint(u[nb:])
        c = self.coeffs
        return np.concatenate((c[0, 0] * t1 + c[1, 0] * t2, c[0, 1] * t1 + c[1, 1] * t2))


class BlockRowOperator(LinearOperator):
    """[A_1, A_2, ...]: domain is the concatenation of the block domains."""

    def __init__(self, ops):
        ops = list(ops)
        m = ops[0].shape[0]
        for op in ops:
            if op.shape[0] != m:
                raise DimensionError("row blocks have mismatched heights")
        self.ops = ops
        self.splits = np.cumsum([op.shape[1] for op in ops])[:-1]
        super().__init__((m, int(sum(op.shape[1] for op in ops))))

    def apply(self, v):
        v = _asvec(v, self.shape[1])
        parts = np.split(v, self.splits)
        out = self.ops[0].apply(parts[0])
        for op, p in zip(self.ops[1:], parts[1:]):
            out += op.apply(p)
        return out

    def apply_adjoint(self, u):
        u = _asvec(u, self.shape[0])
        return np.concatenate([op.apply_adjoint(u) for op in self.ops])


class BlockDiagOperator(LinearOperator):
    """blkdiag(B_1, B_2, ...) of square blocks."""

    def __init__(self, ops):
        ops = list(ops)
        for op in ops:
            if op.shape[0] != op.shape[1]:
                raise DimensionError("diagonal blocks must be square")
        self.ops = ops
        self.splits = np.cumsum([op.shape[1] for op in ops])[:-1]
        n = int(sum(op.shape[1] for op in ops))
        super().__init__((n, n))
        self.symmetric = all(op.symmetric for op in ops)

    def apply(self, v):
        v = _asvec(v, self.shape[1])
        parts = np.split(v, self.splits)
        return np.concatenate([op.apply(p) for op, p in zip(self.ops, parts)])

    def apply_adjoint(self, u):
        u = _asvec(u, self.shape[0])
        parts = np.split(u, self.splits)
        return np.concatenate([op.apply_adjoint(p) for op, p in zip(self.ops, parts)])

    def solve(self, v):
        v = _asvec(v, self.shape[1])
        parts = np.split(v, self.splits)
        return np.concatenate([op.solve(p) for op, p in zip(self.ops, parts)])


class ShiftedOperator(LinearOperator):
    """B + diag(d) for a square operator B."""

    def __init__(self, op, diag):
        if op.shape[0] != op.shape[1]:
            raise DimensionError("shifted operator must be square")
        self.op = op
        self.diag = np.asarray(diag, dtype=np.float64)
        if self.diag.shape != (op.shape[0],):
            raise DimensionError("diagonal shift has wrong length")
        super().__init__(op.shape)
        self.symmetric = op.symmetric

    def apply(self, v):
        v = _asvec(v, self.shape[1])
        return self.op.apply(v) + self.diag * v

    def apply_adjoint(self, u):
        u = _asvec(u, self.shape[0])
        return self.op.apply_adjoint(u) + self.diag * u


class NormalEqOperator(LinearOperator):
    """A Theta A^T with a positive diagonal Theta."""

    symmetric = True

    def __init__(self, a_op, theta):
        self.a_op = a_op
        self.theta = np.asarray(theta, dtype=np.float64)
        if self.theta.shape != (a_op.shape[1],):
            raise DimensionError("theta has wrong length")
        m = a_op.shape[0]
        super().__init__((m, m))

    def apply(self, v):
        return self.a_op.apply(self.theta * self.a_op.apply_adjoint(v))


class AugmentedOperator(LinearOperator):
    """Saddle-point block operator [[-Q - diag(t), A^T], [A, 0]].

    ``apply_with_byproducts`` additionally returns the three products
    (Q v1, A v1, A^T v2) that the instrumented MINRES tracks.
    """

    symmetric = True

    def __init__(self, q_op, a_op, theta_inv):
        n = q_op.shape[1]
        if q_op.shape != (n, n):
            raise DimensionError("Q must be square")
        if a_op is not None and a_op.shape[1] != n:
            raise DimensionError("A and Q have mismatched widths")
        self.q_op = q_op
        self.a_op = a_op
        self.theta_inv = np.asarray(theta_inv, dtype=np.float64)
        if self.theta_inv.shape != (n,):
            raise DimensionError("theta_inv has wrong length")
        self.n = n
        self.m = a_op.shape[0] if a_op is not None else 0
        super().__init__((n + self.m, n + self.m))

    def apply_with_byproducts(self, v):
        v = _asvec(v, self.shape[1])
        v1 = v[: self.n]
        v2 = v[self.n :]
        qv1 = self.q_op.apply(v1)
        av1 = self.a_op.apply(v1)
        atv2 = self.a_op.apply_adjoint(v2)
        top = atv2 - qv1 - self.theta_inv * v1
        return np.concatenate((top, av1)), qv1, av1, atv2

    def apply(self, v):
        out, _, _, _ = self.apply_with_byproducts(v)
        return out


class Block2x2DiagPrecond(LinearOperator):
    """SPD preconditioner C kron I + diag(d) for a symmetric 2x2 block C.

    Variable j couples only with variable j + nb, so both apply and solve
    reduce to independent 2x2 systems handled in closed form.
    """

    symmetric = True

    def __init__(self, coeffs, diag):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (2, 2) or coeffs[0, 1] != coeffs[1, 0]:
            raise DimensionError("coefficient block must be symmetric 2x2")
        diag = np.asarray(diag, dtype=np.float64)
        if diag.ndim != 1 or diag.size % 2:
            raise DimensionError("diagonal must have even length")
        super().__init__((diag.size, diag.size))
        nb = diag.size // 2
        self.nb = nb
        self._a = coeffs[0, 0] + diag[:nb]
        self._d = coeffs[1, 1] + diag[nb:]
        self._b = coeffs[0, 1]
        self._det = self._a * self._d - self._b * self._b
        if np.any(self._det <= 0) or np.any(self._a <= 0):
            raise NotPositiveDefiniteError("2x2 pair is not positive definite")

    def apply(self, v):
        v = _asvec(v, self.shape[1])
        v1 = v[: self.nb]
        v2 = v[self.nb :]
        return np.concatenate((self._a * v1 + self._b * v2,
                               self._b * v1 + self._d * v2))

    def solve(self, v):
        v = _asvec(v, self.shape[1])
        v1 = v[: self.nb]
        v2 = v[self.nb :]
        return np.concatenate(((self._d * v1 - self._b * v2) / self._det,
                               (self._a * v2 - self._b * v1) / self._det))


class CountingOperator(LinearOperator):
    """Wrapper counting forward and adjoint applications."""

    def __init__(self, op):
        self.op = op
        super().__init__(op.shape)
        self.symmetric = op.symmetric
        self.n_apply = 0
        self.n_adjoint = 0

    def apply(self, v):
        self.n_apply += 1
        return self.op.apply(v)

    def apply_adjoint(self, u):
        self.n_adjoint += 1
        return self.op.apply_adjoint(u)


def apply(op, v):
    return op.apply(v)


def apply_adjoint(op, u):
    return op.apply_adjoint(u)


def as_operator(mat):
    """Wrap an ndarray or scipy sparse matrix; operators pass through."""
    if isinstance(mat, LinearOperator):
        return mat
    if scipy.sparse.issparse(mat):
        return CsrOperator(mat)
    return DenseOperator(np.asarray(mat, dtype=np.float64))


# Dense Cholesky up to this order; sparse input above it falls back to an LU
# factorization (the SPD check then only covers the diagonal pivots).
_DENSE_FACTOR_LIMIT = 4096


class SpdFactorization(LinearOperator):
    """Factorization of an SPD matrix exposing ``solve`` (and ``apply``)."""

    symmetric = True

    def __init__(self, mat):
        sparse_input = scipy.sparse.issparse(mat)
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise DimensionError("SPD factorization needs a square matrix")
        super().__init__((n, n))
        self._mat = mat.tocsr() if sparse_input else np.asarray(mat, dtype=np.float64)
        if sparse_input and n > _DENSE_FACTOR_LIMIT:
            lu = scipy.sparse.linalg.splu(mat.tocsc())
            if np.any(lu.U.diagonal() <= 0):
                raise NotPositiveDefiniteError("non-positive pivot")
            self._solve = lu.solve
        else:
            dense = self._mat.toarray() if sparse_input else self._mat
            if not np.allclose(dense, dense.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(dense).max())):
                raise NotPositiveDefiniteError("matrix is not symmetric")
            try:
                c, low = scipy.linalg.cho_factor(dense, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(str(exc)) from exc
            self._solve = lambda v: scipy.linalg.cho_solve((c, low), v, check_finite=False)

    def solve(self, v):
        return self._solve(_asvec(v, self.shape[0]))

    def apply(self, v):
        return self._mat @ _asvec(v, self.shape[0])


def factorize_spd(mat):
    return SpdFactorization(mat)


def write_matrix_market(path, mat, symmetry="general"):
    """Write a matrix in Matrix Market format with 17 significant digits."""
    if scipy.sparse.issparse(mat):
        mat = mat.tocoo()
    else:
        mat = np.asarray(mat, dtype=np.float64)
    scipy.io.mmwrite(str(path), mat, precision=17, symmetry=symmetry)


def read_matrix_market(path):
    """Read a Matrix Market file; sparse files come back as CSR."""
    mat = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(mat):
        return mat.tocsr()
    return np.asarray(mat, dtype=np.float64)
