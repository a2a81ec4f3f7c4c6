import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import exprel

from discretization.mesh import TensorMesh
from discretization.operator import SpatialOperator, Stencil
from problems.problem import HI, LO, ControlProblem


logger = logging.getLogger("hjbfit.fvm")

# |b| at or below this (times max(1, |a_bar|)) takes the log-limit branch
DEGENERACY_THRESHOLD = 1e-10


@dataclass(frozen=True)
class FittedFactor:
    beta: float
    up_weight: float
    down_weight: float


def fitted_weights(b: np.ndarray, a_bar: np.ndarray, x_lo: np.ndarray, x_hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised (up, down) weights of the fitted flux on [x_lo, x_hi].

    up = b x_hi^beta / (x_hi^beta - x_lo^beta), down = b x_lo^beta / (same),
    beta = b / a_bar, written through exprel so that no power is formed.
    a_bar == 0 gives the upwind limit (max(b, 0), max(-b, 0)).
    """
    b, a_bar, x_lo, x_hi = np.broadcast_arrays(
        np.asarray(b, dtype=float), np.asarray(a_bar, dtype=float), np.asarray(x_lo, dtype=float), np.asarray(x_hi, dtype=float)
    )
    log_ratio = np.log(x_hi / x_lo)
    up = np.empty(b.shape)
    down = np.empty(b.shape)

    flat = a_bar == 0.0
    up[flat] = np.maximum(b[flat], 0.0)
    down[flat] = np.maximum(-b[flat], 0.0)

    diffusive = ~flat
    limit = diffusive & (np.abs(b) <= DEGENERACY_THRESHOLD * np.maximum(1.0, np.abs(a_bar)))
    up[limit] = a_bar[limit] / log_ratio[limit]
    down[limit] = up[limit]

    general = diffusive & ~limit
    if general.any():
        a_g = a_bar[general]
        scale = a_g / log_ratio[general]
        z = (b[general] / a_g) * log_ratio[general]
        pos = z >= 0.0
        up_g = np.empty(z.shape)
        down_g = np.empty(z.shape)
        up_g[pos] = scale[pos] / exprel(-z[pos])
        down_g[pos] = up_g[pos] * np.exp(-z[pos])
        neg = ~pos
        down_g[neg] = scale[neg] / exprel(z[neg])
        up_g[neg] = down_g[neg] * np.exp(z[neg])
        up[general] = up_g
        down[general] = down_g
    return up, down


def fitted_pair(b_mid: float, a_bar_mid: float, x_lo: float, x_hi: float) -> FittedFactor:
    if x_lo <= 0.0:
        raise ValueError(f"x_lo={x_lo} lies on the degenerate face; use the first-cell flux")
    if not x_hi > x_lo:
        raise ValueError(f"need x_lo < x_hi, got [{x_lo}, {x_hi}]")
    if a_bar_mid < 0.0:
        raise ValueError(f"a_bar must be nonnegative, got {a_bar_mid}")
    up, down = fitted_weights(*(np.atleast_1d(float(v)) for v in (b_mid, a_bar_mid, x_lo, x_hi)))
    beta = b_mid / a_bar_mid if a_bar_mid > 0.0 else float(np.copysign(np.inf, b_mid))
    return FittedFactor(beta=float(beta), up_weight=float(up[0]), down_weight=float(down[0]))


def first_cell_factor(nodes: np.ndarray) -> float:
    """Weight x_1 / (2 x_2) of the averaged flux on the degenerate interval [0, x_1]."""
    return float(nodes[1] / (2.0 * nodes[2]))


def check_alpha(mesh: TensorMesh, alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1:] != (mesh.size,):
        raise ValueError(f"control assignment has shape {alpha.shape}, expected (..., {mesh.size})")
    return alpha


def face_points(points: np.ndarray, axis: int, coord: np.ndarray) -> np.ndarray:
    moved = points.copy()
    moved[:, axis] = coord
    return moved


def add_boundary(stencil: Stencil, problem: ControlProblem, points: np.ndarray, axis: int, side: str,
                 weight: np.ndarray, at_face: np.ndarray) -> np.ndarray:
    """Move neighbour weights that land on a boundary node into F; returns weight with them zeroed."""
    if not at_face.any():
        return weight
    ax = stencil.mesh.axes[axis]
    coord = ax.points[0] if side == LO else ax.points[-1]
    values = problem.boundary_values(stencil.tau, face_points(points, axis, np.full(len(points), coord)), axis, side)
    stencil.rhs = stencil.rhs + np.where(at_face, weight * values, 0.0)
    return np.where(at_face, 0.0, weight)


def add_cross_terms(stencil: Stencil, problem: ControlProblem, points: np.ndarray, index: np.ndarray) -> None:
    """Forward differences for the mixed fluxes: d_ir * prod_{s != i} x_s / h_r on p + e_r."""
    mesh = stencil.mesh
    if not problem.has_cross_terms():
        return
    for i in range(mesh.dim):
        others = np.prod(np.delete(points, i, axis=1), axis=1)
        for r in range(mesh.dim):
            if r == i:
                continue
            ax = mesh.axes[r]
            h_r = ax.spacings[index[:, r]]
            w = problem.eval_d(i, r, stencil.tau, points, stencil.alpha) * others / h_r
            stencil.diag = stencil.diag + w
            at_face = index[:, r] + 1 == ax.n_intervals
            stencil.upper[r] = stencil.upper[r] + add_boundary(stencil, problem, points, r, HI, -w, at_face)


def fitted_stencil(problem: ControlProblem, mesh: TensorMesh, tau: float, alpha: np.ndarray) -> Stencil:
    """Fitted finite volume stencil for any dimension; alpha may carry a leading sample axis."""
    if mesh.dim != problem.dim:
        raise ValueError(f"mesh is {mesh.dim}-D but problem is {problem.dim}-D")
    alpha = check_alpha(mesh, alpha)
    stencil = Stencil.empty(mesh, tau, alpha, scheme="fitted")
    index = mesh.interior_indices()
    points = mesh.interior_points()
    n = mesh.dim

    for i, ax in enumerate(mesh.axes):
        q = index[:, i]
        xs = ax.points
        mids = ax.midpoints
        h = ax.spacings[q]

        # face q+1/2
        x_up = mids[q + 1]
        at_up = face_points(points, i, x_up)
        w_up, w_down = fitted_weights(
            problem.eval_b(i, tau, at_up, alpha), problem.eval_a_bar(i, tau, at_up, alpha), xs[q], xs[q + 1]
        )
        stencil.diag = stencil.diag + x_up * w_down / h
        upper = -x_up * w_up / h
        stencil.upper[i] = add_boundary(stencil, problem, points, i, HI, upper, q + 1 == ax.n_intervals)

        # face q-1/2
        x_dn = mids[q]
        at_dn = face_points(points, i, x_dn)
        b_dn = problem.eval_b(i, tau, at_dn, alpha)
        a_dn = problem.eval_a_bar(i, tau, at_dn, alpha)
        first = (q == 1) & ax.degenerate
        safe_lo = np.where(first, xs[1], xs[q - 1])
        wl_up, wl_down = fitted_weights(b_dn, a_dn, safe_lo, np.where(first, xs[2], xs[q]))
        kappa = first_cell_factor(xs) if ax.degenerate else 0.0
        diag_part = np.where(first, kappa * (a_dn + b_dn), x_dn * wl_up / h)
        lower = np.where(first, -kappa * (a_dn - b_dn), -x_dn * wl_down / h)
        stencil.diag = stencil.diag + diag_part
        stencil.lower[i] = add_boundary(stencil, problem, points, i, LO, lower, q == 1)

        # each axis carries its 1/n share of -c
        stencil.diag = stencil.diag - problem.eval_c(tau, points, alpha) / n

    add_cross_terms(stencil, problem, points, index)
    stencil.rhs = stencil.rhs - problem.eval_source(tau, points, alpha)
    logger.debug("fitted stencil %s at tau=%.6g, controls %s", problem.name, tau, alpha.shape)
    return stencil


def assemble_nd(problem: ControlProblem, mesh: TensorMesh, tau: float, alpha: np.ndarray) -> SpatialOperator:
    alpha = check_alpha(mesh, alpha)
    if alpha.ndim != 1:
        raise ValueError("assemble_nd takes one control per interior node")
    return fitted_stencil(problem, mesh, tau, alpha).to_operator()


# -------------------- explicit three-dimensional path --------------------
def _scalar(fn, tau: float, point: Tuple[float, float, float], alpha: float) -> float:
    return float(np.asarray(fn(tau, np.asarray([point], dtype=float), np.asarray([alpha], dtype=float))).reshape(-1)[0])


def assemble_3d(problem: ControlProblem, mesh: TensorMesh, tau: float, alpha: np.ndarray) -> SpatialOperator:
    """Node-by-node assembly of the seven-point coefficients in x, y, z.

    Kept deliberately literal: every coefficient is written out for its own
    axis and first-cell case, so it can serve as a reference for
    ``assemble_nd``.
    """
    if mesh.dim != 3 or problem.dim != 3:
        raise ValueError("assemble_3d needs a three-dimensional mesh and problem")
    alpha = check_alpha(mesh, alpha)
    if alpha.ndim != 1:
        raise ValueError("assemble_3d takes one control per interior node")

    X, Y, Z = (ax.points for ax in mesh.axes)
    axes = mesh.axes
    n1, n2, n3 = mesh.n_intervals
    entries: Dict[Tuple[int, int], float] = {}
    F = np.zeros(mesh.size)

    def a_bar(i: int, pt, a: float) -> float:
        return _scalar(problem.a_bar[i], tau, pt, a)

    def drift(i: int, pt, a: float) -> float:
        return _scalar(problem.b[i], tau, pt, a)

    def cross(i: int, r: int, pt, a: float) -> float:
        return float(problem.eval_d(i, r, tau, np.asarray([pt], dtype=float), np.asarray([a]))[0])

    def boundary(axis: int, side: str, pt) -> float:
        return float(problem.boundary_values(tau, np.asarray([pt], dtype=float), axis, side)[0])

    for k in range(1, n3):
        for j in range(1, n2):
            for i in range(1, n1):
                row = mesh.linearize((i, j, k)) - 1
                a = float(alpha[row])
                x, y, z = X[i], Y[j], Z[k]
                hx, hy, hz = axes[0].h(i), axes[1].h(j), axes[2].h(k)
                node = (x, y, z)
                c = _scalar(problem.c, tau, node, a)

                # cross factors: d1 ~ (x, y), d2 ~ (x, z), d3 ~ (y, z)
                d1 = cross(0, 1, node, a)
                d2 = cross(0, 2, node, a)
                d3 = cross(1, 2, node, a)
                d1_yx, d2_zx, d3_zy = cross(1, 0, node, a), cross(2, 0, node, a), cross(2, 1, node, a)

                e_xp = -d2_zx * x * y / hx - d1_yx * x * z / hx
                e_yp = -d1 * y * z / hy - d3_zy * x * y / hy
                e_zp = -d2 * y * z / hz - d3 * x * z / hz
                e_c = -e_xp - e_yp - e_zp - c
                e_xm = e_ym = e_zm = 0.0

                # x, faces i+1/2 and i-1/2
                xm = axes[0].midpoint(i + 0.5)
                f = fitted_pair(drift(0, (xm, y, z), a), a_bar(0, (xm, y, z), a), X[i], X[i + 1])
                e_xp -= xm * f.up_weight / hx
                e_c += xm * f.down_weight / hx
                xm = axes[0].midpoint(i - 0.5)
                if i == 1 and X[0] == 0.0:
                    ab, bb = a_bar(0, (xm, y, z), a), drift(0, (xm, y, z), a)
                    e_c += X[1] / (2.0 * X[2]) * (ab + bb)
                    e_xm = -X[1] / (2.0 * X[2]) * (ab - bb)
                else:
                    f = fitted_pair(drift(0, (xm, y, z), a), a_bar(0, (xm, y, z), a), X[i - 1], X[i])
                    e_c += xm * f.up_weight / hx
                    e_xm = -xm * f.down_weight / hx

                # y, faces j+1/2 and j-1/2
                ym = axes[1].midpoint(j + 0.5)
                f = fitted_pair(drift(1, (x, ym, z), a), a_bar(1, (x, ym, z), a), Y[j], Y[j + 1])
                e_yp -= ym * f.up_weight / hy
                e_c += ym * f.down_weight / hy
                ym = axes[1].midpoint(j - 0.5)
                if j == 1 and Y[0] == 0.0:
                    ab, bb = a_bar(1, (x, ym, z), a), drift(1, (x, ym, z), a)
                    e_c += Y[1] / (2.0 * Y[2]) * (ab + bb)
                    e_ym = -Y[1] / (2.0 * Y[2]) * (ab - bb)
                else:
                    f = fitted_pair(drift(1, (x, ym, z), a), a_bar(1, (x, ym, z), a), Y[j - 1], Y[j])
                    e_c += ym * f.up_weight / hy
                    e_ym = -ym * f.down_weight / hy

                # z, faces k+1/2 and k-1/2
                zm = axes[2].midpoint(k + 0.5)
                f = fitted_pair(drift(2, (x, y, zm), a), a_bar(2, (x, y, zm), a), Z[k], Z[k + 1])
                e_zp -= zm * f.up_weight / hz
                e_c += zm * f.down_weight / hz
                zm = axes[2].midpoint(k - 0.5)
                if k == 1 and Z[0] == 0.0:
                    ab, bb = a_bar(2, (x, y, zm), a), drift(2, (x, y, zm), a)
                    e_c += Z[1] / (2.0 * Z[2]) * (ab + bb)
                    e_zm = -Z[1] / (2.0 * Z[2]) * (ab - bb)
                else:
                    f = fitted_pair(drift(2, (x, y, zm), a), a_bar(2, (x, y, zm), a), Z[k - 1], Z[k])
                    e_c += zm * f.up_weight / hz
                    e_zm = -zm * f.down_weight / hz

                entries[(row, row)] = entries.get((row, row), 0.0) + e_c
                neighbours = (
                    ((i - 1, j, k), e_xm, 0, LO, (X[0], y, z)),
                    ((i + 1, j, k), e_xp, 0, HI, (X[-1], y, z)),
                    ((i, j - 1, k), e_ym, 1, LO, (x, Y[0], z)),
                    ((i, j + 1, k), e_yp, 1, HI, (x, Y[-1], z)),
                    ((i, j, k - 1), e_zm, 2, LO, (x, y, Z[0])),
                    ((i, j, k + 1), e_zp, 2, HI, (x, y, Z[-1])),
                )
                for idx, coef, axis, side, face_pt in neighbours:
                    if mesh.is_interior(idx):
                        col = mesh.linearize(idx) - 1
                        entries[(row, col)] = entries.get((row, col), 0.0) + coef
                    else:
                        F[row] += coef * boundary(axis, side, face_pt)
                F[row] -= _scalar(problem.source, tau, node, a) if problem.source is not None else 0.0

    rows, cols = zip(*entries.keys()) if entries else ((), ())
    E = sp.csr_matrix((list(entries.values()), (rows, cols)), shape=(mesh.size, mesh.size))
    E.eliminate_zeros()
    return SpatialOperator(E=E, F=F, alpha=alpha.copy(), tau=float(tau), scheme="fitted")
