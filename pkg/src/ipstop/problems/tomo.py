"""Dual-energy tomographic reconstruction as a bound-constrained QP.

Two material concentration images x1, x2 on an N x N pixel grid are probed
by line integrals at two beam energies.  With R the ray transform and C the
2x2 attenuation matrix (energy x material), the measurements are
w = (C kron R) [x1; x2] plus noise, and the regularized least squares
reconstruction

    min 0.5 ||(C kron R) x - w||^2 + 0.5 x' (Gamma kron I) x,   x >= 0

is a QP with Q = C'C kron R'R + Gamma kron I.  Q is only available as an
operator; the natural preconditioner replaces R'R by nu*I with nu the mean
column norm, which keeps the cheap pairwise 2x2 coupling.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .. import linop
from ..ipm import ProblemInstance
from . import serialize

# energy x material attenuation coefficients; columns are materials
ATTENUATION = np.array([[1.0, 0.3], [0.4, 1.0]])


def trace_ray(origin, direction, n_cells):
    """Cells and intersection lengths of a ray through the unit square.

    ``direction`` must have unit norm, so lengths are Euclidean.  Returns
    (flat pixel indices, lengths) with pixels numbered row-major, row =
    floor(y * n), column = floor(x * n).
    """
    ox, oy = float(origin[0]), float(origin[1])
    dx, dy = float(direction[0]), float(direction[1])
    t0, t1 = -math.inf, math.inf
    for o, d in ((ox, dx), (oy, dy)):
        if d == 0.0:
            if o <= 0.0 or o >= 1.0:
                return np.empty(0, dtype=np.intp), np.empty(0)
        else:
            ta = (0.0 - o) / d
            tb = (1.0 - o) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    if t1 <= t0 + 1e-14:
        return np.empty(0, dtype=np.intp), np.empty(0)

    n = n_cells
    px = ox + t0 * dx
    py = oy + t0 * dy
    ix = min(max(int(px * n), 0), n - 1)
    iy = min(max(int(py * n), 0), n - 1)
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    tdx = abs(1.0 / (n * dx)) if dx != 0.0 else math.inf
    tdy = abs(1.0 / (n * dy)) if dy != 0.0 else math.inf
    if dx > 0:
        tnx = ((ix + 1) / n - ox) / dx
    elif dx < 0:
        tnx = (ix / n - ox) / dx
    else:
        tnx = math.inf
    if dy > 0:
        tny = ((iy + 1) / n - oy) / dy
    elif dy < 0:
        tny = (iy / n - oy) / dy
    else:
        tny = math.inf

    idx = []
    seg = []
    t_cur = t0
    while t_cur < t1 - 1e-14:
        t_next = min(tnx, tny, t1)
        length = t_next - t_cur
        if length > 0.0:
            idx.append(iy * n + ix)
            seg.append(length)
        if t_next >= t1:
            break
        if tnx <= tny:
            ix += step_x
            tnx += tdx
        else:
            iy += step_y
            tny += tdy
        if not (0 <= ix < n and 0 <= iy < n):
            break
        t_cur = t_next
    return np.asarray(idx, dtype=np.intp), np.asarray(seg)


def ray_matrix(n_cells, n_angles, n_det):
    """Parallel-beam ray transform on the unit square as a sparse matrix."""
    rows, cols, vals = [], [], []
    spacing = math.sqrt(2.0) / n_det
    row = 0
    for a in range(n_angles):
        # offset angles so no beam runs exactly along a grid line
        theta = math.pi * (a + 0.5) / n_angles
        d = (math.cos(theta), math.sin(theta))
        perp = (-d[1], d[0])
        for i in range(n_det):
            t = (i + 0.5 - 0.5 * n_det) * spacing
            origin = (0.5 + t * perp[0] - 1.5 * d[0],
                      0.5 + t * perp[1] - 1.5 * d[1])
            idx, seg = trace_ray(origin, d, n_cells)
            rows.extend([row] * idx.size)
            cols.extend(idx.tolist())
            vals.extend(seg.tolist())
            row += 1
    mat = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                  shape=(row, n_cells * n_cells))
    return mat.tocsr()


def phantom(n_cells, rng):
    """Two nonnegative material maps: a holed disk and scattered blobs."""
    xs = (np.arange(n_cells) + 0.5) / n_cells
    gx, gy = np.meshgrid(xs, xs)
    x1 = np.zeros((n_cells, n_cells))
    x1[(gx - 0.5) ** 2 + (gy - 0.5) ** 2 < 0.35 ** 2] = 1.0
    for _ in range(2):
        cx, cy = rng.uniform(0.3, 0.7, size=2)
        r = rng.uniform(0.05, 0.1)
        x1[(gx - cx) ** 2 + (gy - cy) ** 2 < r ** 2] = 0.0
    x2 = np.zeros((n_cells, n_cells))
    for _ in range(4):
        cx, cy = rng.uniform(0.2, 0.8, size=2)
        r = rng.uniform(0.04, 0.09)
        x2[(gx - cx) ** 2 + (gy - cy) ** 2 < r ** 2] = rng.uniform(0.5, 1.0)
    return x1.ravel(), x2.ravel()


def forward(rays, x):
    """Measurements (C kron R) x for stacked material images."""
    npix = rays.shape[1]
    x1 = x[:npix]
    x2 = x[npix:]
    c = ATTENUATION
    return np.concatenate((rays @ (c[0, 0] * x1 + c[0, 1] * x2),
                           rays @ (c[1, 0] * x1 + c[1, 1] * x2)))


def adjoint(rays, w):
    nray = rays.shape[0]
    w1 = w[:nray]
    w2 = w[nray:]
    c = ATTENUATION
    rt1 = rays.T @ w1
    rt2 = rays.T @ w2
    return np.concatenate((c[0, 0] * rt1 + c[1, 0] * rt2,
                           c[0, 1] * rt1 + c[1, 1] * rt2))


@dataclass
class TomoProblem:
    problem: ProblemInstance
    rays: scipy.sparse.csr_matrix
    w: np.ndarray
    x_true: np.ndarray
    params: dict

    def save(self, outdir):
        serialize.save_problem(outdir, "tomo", self.params,
                               {"rays": self.rays},
                               {"w": self.w, "x_true": self.x_true})


def _regularizer(rho, eta):
    # Tikhonov weight plus a coupling that penalizes material disagreement
    return np.array([[rho + eta, -eta], [-eta, rho + eta]])


def build(rays, w, params, x_true=None):
    npix = rays.shape[1]
    gamma2 = _regularizer(params["rho"], params["eta"])
    rays_op = linop.CsrOperator(rays)
    gram = linop.GramOperator(rays_op)
    ctc = ATTENUATION.T @ ATTENUATION
    q_op = linop.SumOperator([
        linop.Kron2Operator(ctc, gram),
        linop.Kron2Operator(gamma2, linop.IdentityOperator(npix)),
    ])
    c = -adjoint(rays, w)
    nu = float(np.sum(rays.data ** 2)) / npix
    base = ctc * nu + gamma2

    def precond_factory(problem, bt):
        return linop.Block2x2DiagPrecond(base, bt.theta_inv)

    problem = ProblemInstance(c=c, q_op=q_op, precond_factory=precond_factory,
                              name="tomo-%d" % params["level"], meta=dict(params))
    return TomoProblem(problem=problem, rays=rays, w=w,
                       x_true=x_true if x_true is not None else np.zeros(2 * npix),
                       params=dict(params))


def gen_tomo(level=32, seed=0, n_angles=None, n_det=None, rho=0.001, eta=0.001,
             noise=0.01):
    """Generate a reconstruction instance on a level x level grid.

    The Tikhonov weights rho (per-material smoothing) and eta (coupling) are
    deliberately small: they keep the reconstruction faithful and leave the
    normal matrix dominated by the ray geometry rather than the regularizer,
    which is what makes the inner solves nontrivial.
    """
    if n_angles is None:
        n_angles = max(8, (3 * level) // 4)
    if n_det is None:
        n_det = int(math.ceil(math.sqrt(2.0) * level)) + 1
    rng = np.random.default_rng(seed)
    x1, x2 = phantom(level, rng)
    x_true = np.concatenate((x1, x2))
    rays = ray_matrix(level, n_angles, n_det)
    w = forward(rays, x_true)
    scale = float(np.std(w))
    w = w + noise * scale * rng.standard_normal(w.size)
    params = {"level": level, "seed": seed, "n_angles": n_angles,
              "n_det": n_det, "rho": rho, "eta": eta, "noise": noise}
    return build(rays, w, params, x_true)


def from_saved(meta, matrices, vectors):
    return build(matrices["rays"], vectors["w"], meta, vectors.get("x_true"))
