import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger("hjbfit.mesh")

MultiIndex = Tuple[int, ...]

_DEFAULT_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class Axis:
    """One coordinate direction of the box, nodes 0..N on [x_0, x_max]."""

    nodes: Tuple[float, ...]
    name: str = "x"

    def __post_init__(self) -> None:
        nodes = tuple(float(v) for v in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) < 3:
            raise ValueError(f"axis {self.name!r} needs at least 2 intervals, got {len(nodes) - 1}")
        if nodes[0] < 0.0:
            raise ValueError(f"axis {self.name!r} must start at a coordinate >= 0, got {nodes[0]}")
        if not all(np.isfinite(nodes)):
            raise ValueError(f"axis {self.name!r} has non-finite nodes")
        for k in range(len(nodes) - 1):
            if not nodes[k] < nodes[k + 1]:
                raise ValueError(
                    f"axis {self.name!r} nodes must be strictly increasing (nodes[{k}]={nodes[k]}, nodes[{k + 1}]={nodes[k + 1]})"
                )

    @property
    def n_intervals(self) -> int:
        return len(self.nodes) - 1

    @property
    def n_interior(self) -> int:
        return len(self.nodes) - 2

    @property
    def lo(self) -> float:
        return self.nodes[0]

    @property
    def hi(self) -> float:
        return self.nodes[-1]

    @property
    def degenerate(self) -> bool:
        # Only a face sitting exactly on 0 degenerates; a shifted axis is fitted throughout.
        return self.nodes[0] == 0.0

    @cached_property
    def points(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    @cached_property
    def midpoints(self) -> np.ndarray:
        """x_{k+1/2} for k = -1..N, stored at position k+1 (length N+2).

        The two ends are clamped: x_{-1/2} = x_0 and x_{N+1/2} = x_max.
        """
        pts = self.points
        mids = np.empty(len(pts) + 1)
        mids[0] = pts[0]
        mids[1:-1] = 0.5 * (pts[:-1] + pts[1:])
        mids[-1] = pts[-1]
        return mids

    def midpoint(self, k: float) -> float:
        """Half-point x_{k} for k in {-1/2, 1/2, ..., N+1/2}."""
        pos = int(round(k + 0.5))
        if abs((k + 0.5) - pos) > 1e-12 or not 0 <= pos < len(self.midpoints):
            raise ValueError(f"{k} is not a half-index on axis {self.name!r}")
        return float(self.midpoints[pos])

    @cached_property
    def spacings(self) -> np.ndarray:
        """h_{x_k} = x_{k+1/2} - x_{k-1/2} for k = 0..N."""
        return np.diff(self.midpoints)

    def h(self, k: int) -> float:
        return float(self.spacings[k])


def build_uniform(lo: float, hi: float, n_intervals: int, name: str = "x") -> Axis:
    if not hi > lo:
        raise ValueError(f"upper bound {hi} must exceed lower bound {lo}")
    if lo < 0:
        raise ValueError(f"lower bound must be >= 0, got {lo}")
    if int(n_intervals) != n_intervals or n_intervals < 2:
        raise ValueError(f"need at least 2 intervals, got {n_intervals}")
    nodes = np.linspace(lo, hi, int(n_intervals) + 1)
    return Axis(nodes=tuple(nodes.tolist()), name=name)


def build_from_nodes(nodes: Sequence[float], name: str = "x") -> Axis:
    return Axis(nodes=tuple(float(v) for v in nodes), name=name)


def default_axis_names(dim: int) -> List[str]:
    if dim <= len(_DEFAULT_NAMES):
        return list(_DEFAULT_NAMES[:dim])
    return [f"x{i + 1}" for i in range(dim)]


@dataclass(frozen=True)
class TensorMesh:
    """Tensor product of axes; interior nodes are numbered first-axis-fastest."""

    axes: Tuple[Axis, ...]
    _strides: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        if not axes:
            raise ValueError("mesh needs at least one axis")
        object.__setattr__(self, "axes", axes)
        strides: List[int] = []
        acc = 1
        for ax in axes:
            strides.append(acc)
            acc *= ax.n_interior
        object.__setattr__(self, "_strides", tuple(strides))

    @classmethod
    def from_axes(cls, axes: Sequence[Axis]) -> "TensorMesh":
        return cls(axes=tuple(axes))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        """Interior node counts (N_i - 1) per axis."""
        return tuple(ax.n_interior for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> Tuple[int, ...]:
        return self._strides

    @property
    def names(self) -> List[str]:
        return [ax.name for ax in self.axes]

    # -------------------- indexing --------------------
    def is_interior(self, idx: MultiIndex) -> bool:
        if len(idx) != self.dim:
            return False
        return all(1 <= q <= ax.n_intervals - 1 for q, ax in zip(idx, self.axes))

    def linearize(self, idx: MultiIndex) -> int:
        """1-based flat index I = i + (j-1) n_1 + (k-1) n_1 n_2 + ..."""
        if not self.is_interior(idx):
            raise ValueError(f"{tuple(idx)} is not an interior multi-index of a {self.dim}-D mesh with N={self.n_intervals}")
        return 1 + sum((q - 1) * s for q, s in zip(idx, self._strides))

    def delinearize(self, flat: int) -> MultiIndex:
        if not 1 <= flat <= self.size:
            raise ValueError(f"flat index {flat} outside 1..{self.size}")
        rest = flat - 1
        out: List[int] = []
        for n in self.shape:
            out.append(rest % n + 1)
            rest //= n
        return tuple(out)

    def interior_indices(self) -> np.ndarray:
        """(size, dim) array of 1-based per-axis indices in flat order."""
        grids = np.meshgrid(*[np.arange(1, n + 1) for n in self.shape], indexing="ij")
        return np.stack([g.ravel(order="F") for g in grids], axis=-1)

    @property
    def n_intervals(self) -> Tuple[int, ...]:
        return tuple(ax.n_intervals for ax in self.axes)

    # -------------------- geometry --------------------
    def interior_points(self) -> np.ndarray:
        idx = self.interior_indices()
        return np.stack([ax.points[idx[:, i]] for i, ax in enumerate(self.axes)], axis=-1)

    def cell_volume(self, idx: MultiIndex) -> float:
        if not self.is_interior(idx):
            raise ValueError(f"{tuple(idx)} is not an interior multi-index")
        return float(np.prod([ax.h(q) for q, ax in zip(idx, self.axes)]))

    def cell_volumes(self) -> np.ndarray:
        idx = self.interior_indices()
        vols = np.ones(self.size)
        for i, ax in enumerate(self.axes):
            vols *= ax.spacings[idx[:, i]]
        return vols

    def interior_measure(self) -> float:
        return float(self.cell_volumes().sum())

    def describe(self) -> Dict[str, object]:
        return {
            "dim": self.dim,
            "intervals": list(self.n_intervals),
            "unknowns": self.size,
            "bounds": [(ax.lo, ax.hi) for ax in self.axes],
        }


def build_mesh(specs: Sequence[Dict[str, object]], names: Optional[Sequence[str]] = None) -> TensorMesh:
    """Mesh from config-style axis specs: {lo, hi, n} or {nodes: [...]}."""
    labels = list(names) if names else default_axis_names(len(specs))
    axes: List[Axis] = []
    for spec, label in zip(specs, labels):
        if spec.get("nodes") is not None:
            axes.append(build_from_nodes(spec["nodes"], name=label))  # type: ignore[arg-type]
        else:
            axes.append(build_uniform(float(spec["lo"]), float(spec["hi"]), int(spec["n"]), name=label))  # type: ignore[arg-type]
    mesh = TensorMesh.from_axes(axes)
    logger.debug("built mesh %s", mesh.describe())
    return mesh
