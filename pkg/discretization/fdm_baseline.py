import logging

import numpy as np

from discretization.fitted_fvm import check_alpha, face_points, add_boundary, add_cross_terms
from discretization.mesh import TensorMesh
from discretization.operator import SpatialOperator, Stencil
from problems.problem import HI, LO, ControlProblem


logger = logging.getLogger("hjbfit.fdm")

# relative step for the coefficient derivatives the non-divergence form needs
DERIVATIVE_STEP = 1e-6


def _axis_derivative(fn, axis: int, tau: float, points: np.ndarray, alpha: np.ndarray, step: float) -> np.ndarray:
    fwd = face_points(points, axis, points[:, axis] + step)
    bwd = face_points(points, axis, points[:, axis] - step)
    return (fn(axis, tau, fwd, alpha) - fn(axis, tau, bwd, alpha)) / (2.0 * step)


def fdm_stencil(problem: ControlProblem, mesh: TensorMesh, tau: float, alpha: np.ndarray) -> Stencil:
    """Central second differences and upwinded first differences.

    The divergence form is expanded per axis into
    a_ii v_ii + mu_i v_i with mu_i = d(a_ii)/dx_i + x_i b_i, and the
    zeroth-order coefficient gains d(x_i b_i)/dx_i. Cross fluxes reuse the
    forward-difference weights of the fitted scheme.
    """
    if mesh.dim != problem.dim:
        raise ValueError(f"mesh is {mesh.dim}-D but problem is {problem.dim}-D")
    alpha = check_alpha(mesh, alpha)
    stencil = Stencil.empty(mesh, tau, alpha, scheme="fdm")
    index = mesh.interior_indices()
    points = mesh.interior_points()
    c_eff = problem.eval_c(tau, points, alpha)

    for i, ax in enumerate(mesh.axes):
        q = index[:, i]
        xs = ax.points
        x = points[:, i]
        dx_plus = xs[q + 1] - xs[q]
        dx_minus = xs[q] - xs[q - 1]
        step = DERIVATIVE_STEP * (ax.hi - ax.lo)

        a_bar = problem.eval_a_bar(i, tau, points, alpha)
        b = problem.eval_b(i, tau, points, alpha)
        da_bar = _axis_derivative(problem.eval_a_bar, i, tau, points, alpha, step)
        db = _axis_derivative(problem.eval_b, i, tau, points, alpha, step)

        a_ii = a_bar * x**2
        mu = 2.0 * a_bar * x + x**2 * da_bar + x * b
        c_eff = c_eff + b + x * db

        w_lo = 2.0 / (dx_minus * (dx_plus + dx_minus))
        w_hi = 2.0 / (dx_plus * (dx_plus + dx_minus))
        up_drift = np.maximum(mu, 0.0) / dx_plus
        down_drift = np.maximum(-mu, 0.0) / dx_minus

        stencil.diag = stencil.diag + a_ii * (w_lo + w_hi) + up_drift + down_drift
        upper = -a_ii * w_hi - up_drift
        lower = -a_ii * w_lo - down_drift
        stencil.upper[i] = add_boundary(stencil, problem, points, i, HI, upper, q + 1 == ax.n_intervals)
        stencil.lower[i] = add_boundary(stencil, problem, points, i, LO, lower, q == 1)

    stencil.diag = stencil.diag - c_eff
    add_cross_terms(stencil, problem, points, index)
    stencil.rhs = stencil.rhs - problem.eval_source(tau, points, alpha)
    logger.debug("fdm stencil %s at tau=%.6g, controls %s", problem.name, tau, alpha.shape)
    return stencil


def assemble_fdm(problem: ControlProblem, mesh: TensorMesh, tau: float, alpha: np.ndarray) -> SpatialOperator:
    alpha = check_alpha(mesh, alpha)
    if alpha.ndim != 1:
        raise ValueError("assemble_fdm takes one control per interior node")
    return fdm_stencil(problem, mesh, tau, alpha).to_operator()
