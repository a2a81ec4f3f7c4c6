import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from discretization.mesh import TensorMesh


logger = logging.getLogger("hjbfit.problem")

# (tau, points[..., n], alpha[...]) -> values[...]; must accept broadcastable arrays.
CoefficientFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
TerminalFn = Callable[[np.ndarray], np.ndarray]
BoundaryFn = Callable[[float, np.ndarray], np.ndarray]

DIRICHLET = "dirichlet"
ZERO = "zero"
LO = "lo"
HI = "hi"

Face = Tuple[int, str]


def constant(value: float) -> CoefficientFn:
    def _fn(tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        shape = np.broadcast_shapes(np.shape(points)[:-1], np.shape(alpha))
        return np.full(shape, float(value))

    return _fn


@dataclass(frozen=True)
class ControlSet:
    lo: float
    hi: float
    samples: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("control set needs at least one sample")
        values = tuple(sorted(float(s) for s in self.samples))
        if self.hi < self.lo:
            raise ValueError(f"control bounds reversed: [{self.lo}, {self.hi}]")
        if values[0] < self.lo or values[-1] > self.hi:
            raise ValueError(f"control samples must lie in [{self.lo}, {self.hi}]")
        if values[0] != self.lo or values[-1] != self.hi:
            raise ValueError("control samples must include both endpoints")
        object.__setattr__(self, "samples", values)

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int) -> "ControlSet":
        if count < 1:
            raise ValueError(f"need at least one control sample, got {count}")
        if count == 1 or hi == lo:
            if hi != lo:
                raise ValueError("a single control sample requires lo == hi")
            return cls(lo=lo, hi=hi, samples=(float(lo),))
        return cls(lo=lo, hi=hi, samples=tuple(np.linspace(lo, hi, count).tolist()))

    @classmethod
    def singleton(cls, value: float) -> "ControlSet":
        return cls(lo=value, hi=value, samples=(float(value),))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=float)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class BoundaryPolicy:
    modes: Dict[Face, str]

    def __post_init__(self) -> None:
        for face, mode in self.modes.items():
            if mode not in (DIRICHLET, ZERO):
                raise ValueError(f"unknown boundary mode {mode!r} on face {face}")

    @classmethod
    def uniform(cls, dim: int, mode: str = DIRICHLET) -> "BoundaryPolicy":
        return cls(modes={(i, side): mode for i in range(dim) for side in (LO, HI)})

    @classmethod
    def degenerate_zero(cls, dim: int) -> "BoundaryPolicy":
        """Zero on every x_i = 0 face, callback values on the far faces."""
        modes: Dict[Face, str] = {}
        for i in range(dim):
            modes[(i, LO)] = ZERO
            modes[(i, HI)] = DIRICHLET
        return cls(modes=modes)

    def mode(self, axis: int, side: str) -> str:
        try:
            return self.modes[(axis, side)]
        except KeyError:
            raise ValueError(f"no boundary mode for face (axis={axis}, side={side})") from None

    def check_complete(self, dim: int) -> None:
        missing = [(i, s) for i in range(dim) for s in (LO, HI) if (i, s) not in self.modes]
        if missing:
            raise ValueError(f"boundary policy misses faces {missing}")


@dataclass(frozen=True)
class ControlProblem:
    """HJB problem in divergence form on a box.

    Diffusion entries factor as a_ii = a_bar_i * x_i**2 and a_ir = d_ir * prod(x),
    the drift flux of axis i is x_i * b_i * v and c is the zeroth-order term.
    ``time_homogeneous`` states that no coefficient (hence E) depends on tau;
    boundary data and sources may still do so.
    ``tag`` identifies the coefficient set (e.g. a parameter repr); operator
    caches share stencils only between problems with equal name and tag.
    Cross factors are stored per ordered pair (i, r), i != r, 0-based. A pair
    given in one ordering serves both; a pair given in neither is zero.
    """

    name: str
    dim: int
    horizon: float
    controls: ControlSet
    a_bar: Tuple[CoefficientFn, ...]
    b: Tuple[CoefficientFn, ...]
    c: CoefficientFn
    terminal: TerminalFn
    boundary: BoundaryFn
    d: Mapping[Tuple[int, int], CoefficientFn] = field(default_factory=dict)
    source: Optional[CoefficientFn] = None
    boundary_policy: Optional[BoundaryPolicy] = None
    time_homogeneous: bool = False
    tag: str = ""

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if len(self.a_bar) != self.dim or len(self.b) != self.dim:
            raise ValueError(f"need {self.dim} a_bar and b callbacks, got {len(self.a_bar)} and {len(self.b)}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        for (i, r) in self.d:
            if i == r or not (0 <= i < self.dim and 0 <= r < self.dim):
                raise ValueError(f"invalid cross pair ({i}, {r}) for dim {self.dim}")
        policy = self.boundary_policy or BoundaryPolicy.uniform(self.dim)
        policy.check_complete(self.dim)
        object.__setattr__(self, "boundary_policy", policy)
        object.__setattr__(self, "a_bar", tuple(self.a_bar))
        object.__setattr__(self, "b", tuple(self.b))
        object.__setattr__(self, "d", dict(self.d))

    # -------------------- coefficient evaluation --------------------
    def eval_a_bar(self, i: int, tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return _shaped(self.a_bar[i](tau, points, alpha), points, alpha)

    def eval_b(self, i: int, tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return _shaped(self.b[i](tau, points, alpha), points, alpha)

    def eval_d(self, i: int, r: int, tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        fn = self.d.get((i, r)) or self.d.get((r, i))
        if fn is None:
            return np.zeros(np.broadcast_shapes(np.shape(points)[:-1], np.shape(alpha)))
        return _shaped(fn(tau, points, alpha), points, alpha)

    def eval_c(self, tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return _shaped(self.c(tau, points, alpha), points, alpha)

    def eval_source(self, tau: float, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        if self.source is None:
            return np.zeros(np.broadcast_shapes(np.shape(points)[:-1], np.shape(alpha)))
        return _shaped(self.source(tau, points, alpha), points, alpha)

    def has_cross_terms(self) -> bool:
        return bool(self.d)

    def boundary_values(self, tau: float, points: np.ndarray, axis: int, side: str) -> np.ndarray:
        if self.boundary_policy.mode(axis, side) == ZERO:  # type: ignore[union-attr]
            return np.zeros(np.shape(points)[:-1])
        return np.asarray(self.boundary(tau, points), dtype=float).reshape(np.shape(points)[:-1])


def _shaped(values: np.ndarray, points: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    shape = np.broadcast_shapes(np.shape(points)[:-1], np.shape(alpha))
    return np.broadcast_to(np.asarray(values, dtype=float), shape)


def diffusion_entry(problem: ControlProblem, tau: float, point: Sequence[float], alpha: float, i: int, r: int) -> float:
    """a_ir at one point, 1-based axis indices."""
    n = problem.dim
    if not (1 <= i <= n and 1 <= r <= n):
        raise ValueError(f"diffusion index ({i}, {r}) out of range for dim {n}")
    pts = np.asarray(point, dtype=float).reshape(1, n)
    a = np.asarray([alpha], dtype=float)
    if i == r:
        return float(problem.eval_a_bar(i - 1, tau, pts, a)[0] * pts[0, i - 1] ** 2)
    # one ordering for both (i, r) and (r, i) keeps the entry symmetric
    lo, hi = min(i, r) - 1, max(i, r) - 1
    return float(problem.eval_d(lo, hi, tau, pts, a)[0] * np.prod(pts[0]))


# -------------------- hypothesis checks --------------------
@dataclass
class Violation:
    kind: str
    coefficient: str
    alpha: float
    count: int
    probes: int
    worst: float
    tau: float
    point: Tuple[float, ...]

    def describe(self) -> str:
        return (
            f"{self.kind}: {self.coefficient} at alpha={self.alpha:g} on {self.count}/{self.probes} probes "
            f"(worst {self.worst:.6g} at tau={self.tau:g}, point={tuple(round(p, 6) for p in self.point)})"
        )


NONPOSITIVE_DIFFUSION = "nonpositive_diffusion"
ASYMMETRIC_CROSS = "asymmetric_cross"
NONNEGATIVE_C = "nonnegative_c"


def validate(problem: ControlProblem, mesh: TensorMesh, control_set: Optional[ControlSet] = None) -> List[Violation]:
    """Probe a_bar_i > 0, d_ir == d_ri and c < 0 on (tau, interior node, alpha) triples."""
    if mesh.dim != problem.dim:
        raise ValueError(f"mesh is {mesh.dim}-D but problem is {problem.dim}-D")
    controls = control_set or problem.controls
    taus = sorted({0.0, 0.5 * problem.horizon, problem.horizon})
    points = mesh.interior_points()
    probes = len(taus) * len(points)
    found: List[Violation] = []

    def _record(kind: str, name: str, alpha: float, bad: np.ndarray, values: np.ndarray, tau_of: np.ndarray) -> None:
        count = int(bad.sum())
        if not count:
            return
        flat = np.flatnonzero(bad.ravel())
        worst_pos = flat[np.argmax(np.abs(values.ravel()[flat]))]
        tau_idx, node = divmod(int(worst_pos), len(points))
        found.append(
            Violation(
                kind=kind,
                coefficient=name,
                alpha=float(alpha),
                count=count,
                probes=probes,
                worst=float(values.ravel()[worst_pos]),
                tau=float(tau_of[tau_idx]),
                point=tuple(float(v) for v in points[node]),
            )
        )

    tau_arr = np.asarray(taus)
    for alpha in controls.samples:
        a = np.full(len(points), alpha)
        for i in range(problem.dim):
            vals = np.stack([problem.eval_a_bar(i, t, points, a) for t in taus])
            _record(NONPOSITIVE_DIFFUSION, f"a_bar_{i + 1}", alpha, vals <= 0.0, vals, tau_arr)
        for i in range(problem.dim):
            for r in range(i + 1, problem.dim):
                if (i, r) not in problem.d and (r, i) not in problem.d:
                    continue
                fwd = np.stack([problem.eval_d(i, r, t, points, a) for t in taus])
                bwd = np.stack([problem.eval_d(r, i, t, points, a) for t in taus])
                diff = fwd - bwd
                _record(ASYMMETRIC_CROSS, f"d_{i + 1}{r + 1}", alpha, diff != 0.0, diff, tau_arr)
        cvals = np.stack([problem.eval_c(t, points, a) for t in taus])
        _record(NONNEGATIVE_C, "c", alpha, cvals >= 0.0, cvals, tau_arr)

    for v in found:
        logger.warning("problem %s: %s", problem.name, v.describe())
    return found
