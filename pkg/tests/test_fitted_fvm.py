import numpy as np
import pytest

from discretization.fitted_fvm import (
    DEGENERACY_THRESHOLD,
    assemble_3d,
    assemble_nd,
    first_cell_factor,
    fitted_pair,
    fitted_stencil,
    fitted_weights,
)
from discretization.mesh import TensorMesh, build_from_nodes, build_mesh
from discretization.operator import m_matrix_check, step_matrix
from problems.merton import load_preset, merton_problem
from problems.problem import BoundaryPolicy, ControlProblem, ControlSet, constant
from problems.smoke import SmokeParams, smoke_exact, smoke_problem


# -------------------- fitted flux weights --------------------
def test_fitted_pair_closed_form():
    f = fitted_pair(1.0, 1.0, 1.0, 1.1)
    assert f.beta == 1.0
    assert f.up_weight == pytest.approx(11.0, rel=1e-12)
    assert f.down_weight == pytest.approx(10.0, rel=1e-12)


def test_fitted_pair_matches_power_formula():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x_lo = rng.uniform(0.05, 1.0)
        x_hi = x_lo + rng.uniform(0.01, 0.5)
        a = rng.uniform(0.05, 2.0)
        b = rng.uniform(-2.0, 2.0)
        beta = b / a
        denom = x_hi**beta - x_lo**beta
        f = fitted_pair(b, a, x_lo, x_hi)
        assert f.up_weight == pytest.approx(b * x_hi**beta / denom, rel=1e-9)
        assert f.down_weight == pytest.approx(b * x_lo**beta / denom, rel=1e-9)


def test_fitted_pair_rejects_bad_input():
    with pytest.raises(ValueError):
        fitted_pair(0.1, 1.0, 0.0, 0.5)
    with pytest.raises(ValueError):
        fitted_pair(0.1, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        fitted_pair(0.1, -1.0, 0.2, 0.5)


def test_zero_diffusion_is_upwind_limit():
    assert fitted_pair(0.3, 0.0, 0.2, 0.4).up_weight == 0.3
    assert fitted_pair(0.3, 0.0, 0.2, 0.4).down_weight == 0.0
    assert fitted_pair(-0.3, 0.0, 0.2, 0.4).down_weight == 0.3
    assert fitted_pair(-0.3, 0.0, 0.2, 0.4).up_weight == 0.0
    # small diffusion approaches the same limit
    f = fitted_pair(0.3, 1e-4, 0.2, 0.4)
    assert f.up_weight == pytest.approx(0.3, rel=1e-6)
    assert f.down_weight < 1e-12


def test_weights_continuous_across_degeneracy_threshold():
    rng = np.random.default_rng(11)
    n = 1_000_000
    x_lo = rng.uniform(0.01, 1.0, n)
    x_hi = x_lo + rng.uniform(1e-3, 1.0, n)
    a = rng.uniform(0.1, 2.0, n)
    b = DEGENERACY_THRESHOLD * np.maximum(1.0, a) * rng.uniform(-2.0, 2.0, n)
    up, down = fitted_weights(b, a, x_lo, x_hi)
    limit = a / np.log(x_hi / x_lo)
    assert np.all(up > 0.0) and np.all(down > 0.0)
    np.testing.assert_allclose(up, limit, rtol=1e-8)
    np.testing.assert_allclose(down, limit, rtol=1e-8)


def test_weights_do_not_overflow():
    up, down = fitted_weights(np.array([500.0, -500.0]), np.array([1e-3, 1e-3]), np.array([0.1, 0.1]), np.array([0.2, 0.2]))
    assert np.all(np.isfinite(up)) and np.all(np.isfinite(down))
    assert up[0] == pytest.approx(500.0) and down[1] == pytest.approx(500.0)


def test_first_cell_factor():
    assert first_cell_factor(np.array([0.0, 0.1, 0.2, 0.3])) == pytest.approx(0.25)
    assert first_cell_factor(np.array([0.0, 0.1, 0.3])) == pytest.approx(1.0 / 6.0)


# -------------------- assembly --------------------
def _line_problem(boundary_value: float = 1.0) -> ControlProblem:
    return ControlProblem(
        name="line",
        dim=1,
        horizon=1.0,
        controls=ControlSet.singleton(0.0),
        a_bar=(constant(1.0),),
        b=(constant(1.0),),
        c=constant(-1.0),
        terminal=lambda pts: np.ones(len(pts)),
        boundary=lambda tau, pts: np.full(len(pts), boundary_value),
    )


def test_one_dimensional_operator_by_hand():
    mesh = TensorMesh.from_axes([build_from_nodes([0.0, 1.0, 2.0, 3.0])])
    op = assemble_nd(_line_problem(), mesh, 0.0, np.zeros(mesh.size))
    np.testing.assert_allclose(op.E.toarray(), [[3.0, -3.0], [-1.5, 9.0]], rtol=1e-13)
    np.testing.assert_allclose(op.F, [0.0, -7.5], rtol=1e-13, atol=1e-14)
    # constants are reproduced: E 1 + F = -(b + c) = 0
    np.testing.assert_allclose(op.apply(np.ones(2)), [0.0, 0.0], atol=1e-13)


def test_two_dimensional_interior_rows_have_five_entries():
    problem = smoke_problem(SmokeParams(dim=2, samples=1))
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 5}] * 2)
    op = assemble_nd(problem, mesh, 0.0, np.full(mesh.size, 0.5))
    counts = np.diff(op.E.indptr)
    for flat in range(1, mesh.size + 1):
        idx = mesh.delinearize(flat)
        inner = all(2 <= q <= n - 2 for q, n in zip(idx, mesh.n_intervals))
        if inner:
            assert counts[flat - 1] == 5
        assert counts[flat - 1] <= 5
    triplets = op.triplets()
    assert triplets[0][:2] == (1, 1)
    assert all(1 <= r <= mesh.size and 1 <= c <= mesh.size for r, c, _ in triplets)


def test_smoke_exact_solution_is_consistent():
    params = SmokeParams(dim=2, samples=1)
    problem, exact = smoke_problem(params), smoke_exact(params)
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 6}] * 2)
    tau = 0.4
    op = assemble_nd(problem, mesh, tau, np.full(mesh.size, params.alpha_ref))
    v = exact(tau, mesh.interior_points())
    # dv/dtau = -(E v + F) = rate * v
    np.testing.assert_allclose(-op.apply(v), params.rate * v, rtol=1e-11, atol=1e-13)


def test_batched_stencil_select_matches_single_assembly():
    problem = merton_problem(load_preset("table1"), samples=5)
    mesh = build_mesh([{"lo": 0.0, "hi": 0.5, "n": 4}, {"lo": 0.0, "hi": 0.25, "n": 5}, {"lo": 0.0, "hi": 0.5, "n": 3}])
    samples = problem.controls.values
    batch = fitted_stencil(problem, mesh, 0.5, np.repeat(samples[:, None], mesh.size, axis=1))
    choice = np.arange(mesh.size) % len(samples)
    picked = batch.select(choice).to_operator()
    direct = assemble_nd(problem, mesh, 0.5, samples[choice])
    np.testing.assert_allclose(picked.E.toarray(), direct.E.toarray(), rtol=1e-14, atol=0.0)
    np.testing.assert_allclose(picked.F, direct.F, rtol=1e-14, atol=0.0)


def _random_problem(rng: np.random.Generator, degenerate_faces: bool) -> ControlProblem:
    ca = rng.uniform(0.05, 1.0, (3, 3))
    cb = rng.uniform(-1.0, 1.0, (3, 3))
    cd = rng.uniform(0.0, 0.5, (3, 2))
    cc = rng.uniform(0.1, 1.0, 2)
    cs = rng.uniform(-1.0, 1.0, 2)

    def make_a(i):
        def fn(tau, pts, a):
            return ca[i, 0] + ca[i, 1] * pts[..., i] + ca[i, 2] * np.asarray(a) ** 2 + 0.1 * tau
        return fn

    def make_b(i):
        def fn(tau, pts, a):
            return cb[i, 0] + cb[i, 1] * pts[..., (i + 1) % 3] + cb[i, 2] * np.asarray(a)
        return fn

    def make_d(k):
        def fn(tau, pts, a):
            return cd[k, 0] + cd[k, 1] * np.asarray(a) * pts[..., k]
        return fn

    def c(tau, pts, a):
        return -(cc[0] + cc[1] * np.asarray(a)) - pts[..., 0] * 0.0

    def source(tau, pts, a):
        return cs[0] + cs[1] * pts[..., 2] * np.asarray(a)

    def boundary(tau, pts):
        return 1.0 + pts[..., 0] * pts[..., 1] + np.sin(pts[..., 2]) + tau

    return ControlProblem(
        name="random",
        dim=3,
        horizon=1.0,
        controls=ControlSet.uniform(0.0, 1.0, 3),
        a_bar=tuple(make_a(i) for i in range(3)),
        b=tuple(make_b(i) for i in range(3)),
        c=c,
        d={(0, 1): make_d(0), (0, 2): make_d(1), (1, 2): make_d(2)},
        source=source,
        terminal=lambda pts: np.ones(len(pts)),
        boundary=boundary,
        boundary_policy=BoundaryPolicy.degenerate_zero(3) if degenerate_faces else BoundaryPolicy.uniform(3),
    )


def _random_mesh(rng: np.random.Generator) -> TensorMesh:
    axes = []
    for _ in range(3):
        n = int(rng.integers(2, 6))
        lo = 0.0 if rng.random() < 0.6 else rng.uniform(0.01, 0.2)
        nodes = np.concatenate([[lo], lo + np.cumsum(rng.uniform(0.05, 0.3, n))])
        axes.append(build_from_nodes(nodes))
    return TensorMesh.from_axes(axes)


@pytest.mark.parametrize("seed", range(100))
def test_nd_assembly_matches_explicit_3d(seed):
    rng = np.random.default_rng(seed)
    problem = _random_problem(rng, degenerate_faces=bool(seed % 2))
    mesh = _random_mesh(rng)
    alpha = rng.choice(problem.controls.values, mesh.size)
    tau = float(rng.uniform(0.0, 1.0))
    nd = assemble_nd(problem, mesh, tau, alpha)
    ref = assemble_3d(problem, mesh, tau, alpha)
    scale = max(np.abs(ref.E.toarray()).max(), 1.0)
    np.testing.assert_allclose(nd.E.toarray(), ref.E.toarray(), rtol=1e-12, atol=1e-12 * scale)
    np.testing.assert_allclose(nd.F, ref.F, rtol=1e-12, atol=1e-12 * max(np.abs(ref.F).max(), 1.0))


# -------------------- M-matrix properties --------------------
def test_merton_operator_is_m_matrix_at_full_investment():
    params = load_preset("table1")
    problem = merton_problem(params, samples=101)
    mesh = build_mesh([{"lo": lo, "hi": hi, "n": n} for (lo, hi), n in zip(params.bounds, params.intervals)])
    op = assemble_nd(problem, mesh, params.T, np.ones(mesh.size))
    report = m_matrix_check(op)
    assert report.is_m_matrix, report.summary()


def test_merton_step_matrices_are_m_matrices():
    params = load_preset("table1")
    problem = merton_problem(params, samples=101)
    mesh = build_mesh([{"lo": lo, "hi": hi, "n": n} for (lo, hi), n in zip(params.bounds, params.intervals)])
    dt = params.T / 50
    for a in problem.controls.samples:
        op = assemble_nd(problem, mesh, params.T, np.full(mesh.size, a))
        report = m_matrix_check(step_matrix(op, 1.0, dt))
        assert report.is_m_matrix, f"alpha={a}: {report.summary()}"


def test_m_matrix_check_flags_positive_offdiagonal():
    report = m_matrix_check(np.array([[2.0, 0.5], [-1.0, 2.0]]))
    assert not report.is_m_matrix
    assert report.positive_offdiagonal == [(1, 2)]
    assert report.worst_offdiag_violation == 0.5
    weak = m_matrix_check(np.array([[1.0, -2.0], [-1.0, 2.0]]))
    assert weak.offending == [1]
