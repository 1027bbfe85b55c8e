"""Poisson-constrained tracking control as an equality-constrained QP.

Discretize  min 0.5||y - y0||_M^2 + (beta/2)||u||_M^2  subject to
-Laplace(y) = u + f on the unit square, y = 0 on the boundary, and box
bounds on the control, with bilinear Q1 elements on a uniform grid of
2^nc cells per side.  The state y stays free; stacking x = [y; u] yields

    Q = blkdiag(M, beta*M),  A = [K, -J],  b = M f (interior rows),

where K is the stiffness matrix with boundary rows replaced by identity
rows and J is the mass matrix with boundary rows and columns zeroed.  The
block system preconditioner pairs the mass diagonals with an approximate
Schur complement (K + J/sqrt(beta)) M^{-1} (K + J/sqrt(beta))' held in one
sparse factorization per problem.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .. import linop
from ..ipm import ProblemInstance
from . import serialize

# Q1 element matrices on a square cell of side h, local corner order
# (0,0), (1,0), (1,1), (0,1)
_MASS_E = np.array([[4.0, 2.0, 1.0, 2.0],
                    [2.0, 4.0, 2.0, 1.0],
                    [1.0, 2.0, 4.0, 2.0],
                    [2.0, 1.0, 2.0, 4.0]]) / 36.0
_STIFF_E = np.array([[4.0, -1.0, -2.0, -1.0],
                     [-1.0, 4.0, -1.0, -2.0],
                     [-2.0, -1.0, 4.0, -1.0],
                     [-1.0, -2.0, -1.0, 4.0]]) / 6.0


def q1_matrices(n1d):
    """Assembled mass and stiffness matrices on an n1d x n1d node grid."""
    h = 1.0 / (n1d - 1)
    cells = n1d - 1
    cx, cy = np.meshgrid(np.arange(cells), np.arange(cells))
    base = (cy * n1d + cx).ravel()
    corners = np.stack((base, base + 1, base + n1d + 1, base + n1d), axis=1)
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    ncell = corners.shape[0]
    mass = scipy.sparse.coo_matrix(
        (np.tile((h * h * _MASS_E).ravel(), ncell), (rows, cols)),
        shape=(n1d * n1d, n1d * n1d)).tocsr()
    stiff = scipy.sparse.coo_matrix(
        (np.tile(_STIFF_E.ravel(), ncell), (rows, cols)),
        shape=(n1d * n1d, n1d * n1d)).tocsr()
    return mass, stiff, h


def boundary_mask(n1d):
    mask = np.zeros((n1d, n1d), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask.ravel()


def dirichlet_matrices(n1d):
    """Mass M, constrained stiffness K (boundary rows -> identity) and
    control coupling J (mass with boundary rows and columns zeroed)."""
    mass, stiff, h = q1_matrices(n1d)
    bnd = boundary_mask(n1d)
    interior = scipy.sparse.diags((~bnd).astype(np.float64))
    stiff_k = (interior @ stiff + scipy.sparse.diags(bnd.astype(np.float64))).tocsr()
    control_j = (interior @ mass @ interior).tocsr()
    return mass, stiff_k, control_j, h, bnd


def target_state(n1d, seed):
    """Smooth tracking target vanishing on the boundary, with seeded bumps."""
    xs = np.linspace(0.0, 1.0, n1d)
    gx, gy = np.meshgrid(xs, xs)
    envelope = np.sin(np.pi * gx) * np.sin(np.pi * gy)
    rng = np.random.default_rng(seed)
    bumps = np.zeros_like(gx)
    for _ in range(2):
        cx, cy = rng.uniform(0.25, 0.75, size=2)
        width = rng.uniform(0.05, 0.15)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5)
        bumps += amp * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2.0 * width ** 2))
    return (envelope + envelope * bumps).ravel()


@dataclass
class PdeProblem:
    problem: ProblemInstance
    mass: scipy.sparse.csr_matrix
    stiffness: scipy.sparse.csr_matrix
    control: scipy.sparse.csr_matrix
    y0: np.ndarray
    b_eq: np.ndarray
    params: dict

    def save(self, outdir):
        serialize.save_problem(outdir, "pde", self.params,
                               {"mass": self.mass, "stiffness": self.stiffness,
                                "control": self.control},
                               {"y0": self.y0, "b_eq": self.b_eq})


def ipm_variable_mapping(mass, stiff_k, control_j, y0, b_eq, beta, ua, ub,
                         params=None):
    """Stack state and control into one bound-constrained QP instance."""
    n = mass.shape[0]
    mass_op = linop.CsrOperator(mass, symmetric=True)
    q_op = linop.BlockDiagOperator([mass_op, linop.ScaledOperator(beta, mass_op)])
    a_op = linop.BlockRowOperator([
        linop.CsrOperator(stiff_k),
        linop.ScaledOperator(-1.0, linop.CsrOperator(control_j, symmetric=True)),
    ])
    c = np.concatenate((-(mass @ y0), np.zeros(n)))
    lower = np.concatenate((np.full(n, -np.inf), np.full(n, ua)))
    upper = np.concatenate((np.full(n, np.inf), np.full(n, ub)))

    mdiag = mass.diagonal()
    schur_gen = (stiff_k + control_j / math.sqrt(beta)).tocsc()
    schur_lu = scipy.sparse.linalg.splu(schur_gen)

    class SchurBlock(linop.LinearOperator):
        symmetric = True

        def __init__(self):
            super().__init__((n, n))

        def solve(self, v):
            t = schur_lu.solve(np.asarray(v, dtype=np.float64))
            return schur_lu.solve(mass @ t, trans="T")

        def apply(self, v):
            t = schur_gen.T @ np.asarray(v, dtype=np.float64)
            w = scipy.sparse.linalg.spsolve(mass.tocsc(), t)
            return schur_gen @ w

    def precond_factory(problem, bt):
        return linop.BlockDiagOperator([
            linop.DiagonalOperator(mdiag),
            linop.DiagonalOperator(beta * mdiag + bt.theta_inv[n:]),
            SchurBlock(),
        ])

    meta = dict(params or {})
    problem = ProblemInstance(c=c, q_op=q_op, a_op=a_op, b=b_eq, lower=lower,
                              upper=upper, precond_factory=precond_factory,
                              name="pde-%d" % n, meta=meta)
    return problem


def build(mass, stiff_k, control_j, y0, b_eq, params):
    problem = ipm_variable_mapping(mass, stiff_k, control_j, y0, b_eq,
                                   params["beta"], params["ua"], params["ub"],
                                   params)
    return PdeProblem(problem=problem, mass=mass, stiffness=stiff_k,
                      control=control_j, y0=y0, b_eq=b_eq, params=dict(params))


def gen_pde(nc=4, beta=1e-5, seed=0, ua=-0.02, ub=0.02, f_const=100.0):
    """Generate a control instance on a grid with 2^nc cells per side.

    The defaults pose a stiff tracking problem: a strong constant source
    against a tightly capped control, so the box bounds stay strongly
    active and the blocking ratios keep the stepped-residual estimates
    well separated from the inner residual.
    """
    n1d = 2 ** nc + 1
    mass, stiff_k, control_j, h, bnd = dirichlet_matrices(n1d)
    y0 = target_state(n1d, seed)
    f_nodal = np.full(n1d * n1d, f_const)
    b_eq = mass @ f_nodal
    b_eq[bnd] = 0.0
    params = {"nc": nc, "beta": beta, "seed": seed, "ua": ua, "ub": ub,
              "f_const": f_const}
    return build(mass, stiff_k, control_j, y0, b_eq, params)


def from_saved(meta, matrices, vectors):
    return build(matrices["mass"].tocsr(), matrices["stiffness"].tocsr(),
                 matrices["control"].tocsr(), vectors["y0"], vectors["b_eq"], meta)
