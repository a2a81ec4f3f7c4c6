import numpy as np
import pytest

from discretization.mesh import Axis, TensorMesh, build_from_nodes, build_mesh, build_uniform, default_axis_names


def test_linearize_first_axis_fastest():
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 10}] * 3)
    assert mesh.shape == (9, 9, 9)
    assert mesh.linearize((1, 1, 1)) == 1
    assert mesh.linearize((1, 2, 1)) == 10
    assert mesh.linearize((2, 1, 1)) == 2
    assert mesh.linearize((1, 1, 2)) == 82


def test_delinearize_inverts_linearize():
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 4}, {"lo": 0.0, "hi": 2.0, "n": 5}, {"lo": 0.1, "hi": 0.3, "n": 3}])
    for flat in range(1, mesh.size + 1):
        assert mesh.linearize(mesh.delinearize(flat)) == flat
    idx = mesh.interior_indices()
    assert [mesh.linearize(tuple(int(q) for q in row)) for row in idx] == list(range(1, mesh.size + 1))


def test_linearize_rejects_boundary_index():
    mesh = build_mesh([{"lo": 0.0, "hi": 1.0, "n": 4}] * 2)
    with pytest.raises(ValueError):
        mesh.linearize((0, 1))
    with pytest.raises(ValueError):
        mesh.linearize((1, 4))


def test_midpoints_and_spacings_nonuniform():
    ax = build_from_nodes([0.0, 0.1, 0.3, 0.7, 1.0])
    assert ax.midpoint(-0.5) == 0.0
    assert ax.midpoint(0.5) == pytest.approx(0.05)
    assert ax.midpoint(4.5) == 1.0
    assert ax.h(2) == pytest.approx(0.5 - 0.2)
    assert ax.spacings.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ax.midpoint(1.0)


def test_cell_volumes_tile_interior_region():
    mesh = TensorMesh.from_axes([build_from_nodes([0.0, 0.1, 0.3, 0.7, 1.0]), build_uniform(0.0, 0.25, 5)])
    vols = mesh.cell_volumes()
    assert vols.shape == (mesh.size,)
    inner = [(ax.midpoint(ax.n_intervals - 0.5) - ax.midpoint(0.5)) for ax in mesh.axes]
    assert mesh.interior_measure() == pytest.approx(np.prod(inner), rel=1e-14)
    assert mesh.cell_volume((2, 3)) == pytest.approx(mesh.axes[0].h(2) * mesh.axes[1].h(3))


@pytest.mark.parametrize(
    "nodes",
    [
        [0.0, 0.5],
        [-0.1, 0.2, 0.4],
        [0.0, 0.3, 0.3, 1.0],
        [0.0, float("nan"), 1.0],
    ],
)
def test_axis_rejects_bad_nodes(nodes):
    with pytest.raises(ValueError):
        Axis(nodes=tuple(nodes))


def test_degenerate_flag_and_names():
    assert build_uniform(0.0, 1.0, 4).degenerate
    assert not build_uniform(0.1, 1.0, 4).degenerate
    assert default_axis_names(3) == ["x", "y", "z"]
    assert default_axis_names(4) == ["x1", "x2", "x3", "x4"]


def test_interior_points_match_nodes():
    mesh = build_mesh([{"lo": 0.0, "hi": 0.5, "n": 4}, {"nodes": [0.0, 0.1, 0.25]}])
    pts = mesh.interior_points()
    assert pts.shape == (3, 2)
    np.testing.assert_allclose(pts[:, 0], [0.125, 0.25, 0.375])
    np.testing.assert_allclose(pts[:, 1], [0.1, 0.1, 0.1])
