"""Pure-numpy implementations of the hot per-iteration kernels.

Used when the compiled extension is unavailable.  Signatures must match
``_kernels.pyx`` exactly; both backends are benchmarked against each other in
``benchmarks/bench_kernels.py``.
"""

import numpy as np

COMPILED = False


def step_to_boundary(v, dv):
    """Largest alpha with v + alpha*dv >= 0, for v > 0 (inf if unblocked)."""
    neg = dv < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def max_abs_ratio(num, den):
    """max_j |num_j| / den_j for den > 0 (0.0 for empty input)."""
    if num.size == 0:
        return 0.0
    return float(np.max(np.abs(num) / den))


def stepped_dot(a, da, ax, b, db, bs):
    """sum_j (a_j + ax*da_j) * (b_j + bs*db_j)."""
    return float(np.dot(a + ax * da, b + bs * db))


def axpby_norm(base, c1, v1):
    """2-norm of -base + c1*v1."""
    return float(np.linalg.norm(c1 * v1 - base))


def axpbypcz_norm(base, c1, v1, c2, v2):
    """2-norm of -base + c1*v1 + c2*v2."""
    return float(np.linalg.norm(c1 * v1 + c2 * v2 - base))


def reconstruct_ne(v1, v2, theta, theta_inv, xi1_t, out_dx, out_ds):
    """dx = v2 + theta*xi1_t; ds = v1 - theta_inv*dx (nonnegative-bound path).

    ``xi1_t`` is the tracked A^T dy vector.  Writes into preallocated outputs.
    """
    np.multiply(theta, xi1_t, out=out_dx)
    out_dx += v2
    np.multiply(theta_inv, out_dx, out=out_ds)
    np.subtract(v1, out_ds, out=out_ds)
