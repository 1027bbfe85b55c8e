"""Sparse recovery (l1-regularized least squares) as a nonnegative QP.

With the positive/negative split x = u - v, u, v >= 0, the problem

    min tau ||x||_1 + 0.5 ||A x - b||^2

becomes a QP in z = [u; v] with Q = [[1,-1],[-1,1]] kron A'A and
c = tau e - [A'b; -A'b].  A has unit-norm columns built from a Gaussian
matrix with geometrically decaying row scales; the decay controls how far
A'A sits from the identity, i.e. how much work the inner solver has to do
against a preconditioner that keeps only the 2x2 split coupling plus the
barrier diagonal.
"""

from dataclasses import dataclass

import numpy as np

from .. import linop
from ..ipm import ProblemInstance
from . import serialize

SPLIT = np.array([[1.0, -1.0], [-1.0, 1.0]])


@dataclass
class CsProblem:
    problem: ProblemInstance
    sensing: np.ndarray
    b: np.ndarray
    tau: float
    x_true: np.ndarray
    params: dict

    def save(self, outdir):
        serialize.save_problem(outdir, "cs", self.params,
                               {"sensing": self.sensing},
                               {"b": self.b, "x_true": self.x_true})


def build(sensing, b, params, x_true=None):
    m, n = sensing.shape
    tau = params["tau"]
    atb = sensing.T @ b
    c = np.concatenate((tau - atb, tau + atb))
    a_op = linop.DenseOperator(sensing)
    q_op = linop.Kron2Operator(SPLIT, linop.GramOperator(a_op))

    def precond_factory(problem, bt):
        return linop.Block2x2DiagPrecond(SPLIT, bt.theta_inv)

    problem = ProblemInstance(c=c, q_op=q_op, precond_factory=precond_factory,
                              name="cs-%dx%d" % (m, n), meta=dict(params))
    return CsProblem(problem=problem, sensing=sensing, b=b, tau=tau,
                     x_true=x_true if x_true is not None else np.zeros(n),
                     params=dict(params))


def gen_cs(m=512, n=2048, seed=0, k=None, noise=0.01, tau=None, decay=1.0):
    """Generate a recovery instance with a k-sparse planted signal.

    ``decay`` is the exponent of the logarithmic row-scale range: row i of
    the Gaussian matrix is scaled by 10**(-decay*i/(m-1)) before the columns
    are normalized.  decay 0 recovers the classic well-conditioned ensemble.
    """
    if k is None:
        k = max(4, m // 16)
    rng = np.random.default_rng(seed)
    sensing = rng.standard_normal((m, n))
    if decay:
        sensing *= np.logspace(0.0, -decay, m)[:, None]
    sensing /= np.linalg.norm(sensing, axis=0)
    x_true = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x_true[support] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.5, size=k)
    clean = sensing @ x_true
    b = clean + noise * np.linalg.norm(clean) / np.sqrt(m) * rng.standard_normal(m)
    if tau is None:
        tau = 0.1 * float(np.max(np.abs(sensing.T @ b)))
    params = {"m": m, "n": n, "seed": seed, "k": k, "noise": noise, "tau": tau,
              "decay": decay}
    return build(sensing, b, params, x_true)


def from_saved(meta, matrices, vectors):
    return build(np.asarray(matrices["sensing"]), vectors["b"], meta,
                 vectors.get("x_true"))
