import numpy as np
import pytest

from discretization.mesh import build_mesh
from problems.merton import load_preset, merton_problem
from problems.smoke import SmokeParams, smoke_problem
from solver.audit import audit_levels, mmatrix_audit


def _table1(samples=101):
    params = load_preset("table1")
    problem = merton_problem(params, samples=samples)
    mesh = build_mesh([{"lo": lo, "hi": hi, "n": n} for (lo, hi), n in zip(params.bounds, params.intervals)])
    return problem, mesh


def test_time_homogeneous_problem_audits_one_level():
    problem, _ = _table1(samples=3)
    assert audit_levels(problem, [50, 100]) == [problem.horizon]


def test_time_dependent_levels_are_merged():
    from dataclasses import replace

    problem = replace(smoke_problem(SmokeParams()), time_homogeneous=False)
    levels = audit_levels(problem, [2, 4])
    np.testing.assert_allclose(levels, [0.25, 0.5, 0.75, 1.0])


def test_fitted_step_matrices_pass_on_table1():
    problem, mesh = _table1()
    result = mmatrix_audit("fitted", problem, mesh, theta=1.0, steps=[50, 100, 150, 200])
    assert result.passed
    assert result.checked_operators == 101
    assert result.checked_steps == 404
    # the x-axis first cell loses dominance where diffusion vanishes
    assert any(f.alpha == 0.0 for f in result.operator_failures)
    assert all(f.alpha != 1.0 for f in result.operator_failures)
    assert "all levels pass" in result.summary_lines()[0]


def test_smoke_audit_has_no_failures():
    problem = smoke_problem(SmokeParams(dim=2))
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 6}] * 2)
    result = mmatrix_audit("fdm", problem, mesh, theta=0.5, steps=[10])
    assert result.passed and not result.operator_failures


def test_audit_needs_steps():
    problem, mesh = _table1(samples=3)
    with pytest.raises(ValueError):
        mmatrix_audit("fitted", problem, mesh, theta=1.0, steps=[])
