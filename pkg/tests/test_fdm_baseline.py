import numpy as np
import pytest

from discretization.fdm_baseline import assemble_fdm, fdm_stencil
from discretization.mesh import TensorMesh, build_from_nodes, build_mesh
from discretization.operator import m_matrix_check
from problems.merton import load_preset, merton_problem
from problems.problem import ControlProblem, ControlSet, constant


def _pure_second_difference_problem(a: float = 0.3) -> ControlProblem:
    # b = -2a and c = 2a cancel every first- and zeroth-order term of the expansion
    return ControlProblem(
        name="laplace",
        dim=1,
        horizon=1.0,
        controls=ControlSet.singleton(0.0),
        a_bar=(constant(a),),
        b=(constant(-2.0 * a),),
        c=constant(2.0 * a),
        terminal=lambda pts: pts[..., 0] ** 2,
        boundary=lambda tau, pts: pts[..., 0] ** 2,
    )


@pytest.mark.parametrize(
    "nodes",
    [
        np.linspace(0.0, 1.0, 5),
        np.array([0.0, 0.1, 0.35, 0.5, 0.9, 1.0]),
    ],
)
def test_central_difference_exact_on_quadratics(nodes):
    a = 0.3
    mesh = TensorMesh.from_axes([build_from_nodes(nodes)])
    op = assemble_fdm(_pure_second_difference_problem(a), mesh, 0.0, np.zeros(mesh.size))
    x = mesh.interior_points()[:, 0]
    # A v = a x^2 v'' = 2 a x^2 and E = -A
    np.testing.assert_allclose(op.apply(x**2), -2.0 * a * x**2, rtol=1e-10, atol=1e-12)


def test_fdm_stencil_is_tridiagonal_in_1d():
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 4}])
    op = assemble_fdm(_pure_second_difference_problem(), mesh, 0.0, np.zeros(mesh.size))
    dense = op.E.toarray()
    assert np.count_nonzero(np.triu(dense, 2)) == 0
    assert np.count_nonzero(np.tril(dense, -2)) == 0
    assert np.all(np.diag(dense, 1) <= 0.0) and np.all(np.diag(dense, -1) <= 0.0)


def test_fdm_merton_operator_structure():
    params = load_preset("table1")
    problem = merton_problem(params, samples=3)
    mesh = build_mesh([{"lo": lo, "hi": hi, "n": 5} for lo, hi in params.bounds])
    op = assemble_fdm(problem, mesh, params.T, np.full(mesh.size, 0.5))
    assert op.scheme == "fdm"
    assert op.E.shape == (mesh.size, mesh.size)
    assert np.all(np.isfinite(op.F))
    # seven-point pattern
    assert np.diff(op.E.indptr).max() <= 7
    report = m_matrix_check(op)
    assert report.worst_offdiag_violation == 0.0


def test_fdm_batched_matches_single():
    params = load_preset("table2")
    problem = merton_problem(params, samples=3)
    mesh = build_mesh([{"lo": lo, "hi": hi, "n": 4} for lo, hi in params.bounds])
    samples = problem.controls.values
    batch = fdm_stencil(problem, mesh, 0.2, np.repeat(samples[:, None], mesh.size, axis=1))
    for k, a in enumerate(samples):
        single = assemble_fdm(problem, mesh, 0.2, np.full(mesh.size, a))
        chosen = batch.select(np.full(mesh.size, k)).to_operator()
        np.testing.assert_allclose(chosen.E.toarray(), single.E.toarray(), rtol=1e-14)
        np.testing.assert_allclose(chosen.F, single.F, rtol=1e-14)
