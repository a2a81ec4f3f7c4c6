import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from discretization.mesh import TensorMesh
from solver.stepper import Trajectory


logger = logging.getLogger("hjbfit.metrics")

ExactFn = Callable[[float, np.ndarray], np.ndarray]

ERRORS_HEADER = ["scheme", "N1", "N2", "N3", "m", "theta", "l2_error", "max_policy_iters", "wall_ms"]


def _fmt(value: float) -> str:
    return f"{value:.12e}"


@dataclass(frozen=True)
class ErrorRecord:
    scheme: str
    intervals: Tuple[int, ...]
    steps: int
    theta: float
    l2_error: float
    max_policy_iters: int
    wall_ms: float = 0.0

    def __post_init__(self) -> None:
        if not self.l2_error >= 0.0:
            raise ValueError(f"L2 error must be nonnegative, got {self.l2_error}")

    def to_row(self) -> List[str]:
        # N1..N3 columns; missing axes stay blank, extra axes are joined into N3
        sizes = [str(n) for n in self.intervals[:2]]
        tail = "x".join(str(n) for n in self.intervals[2:])
        sizes += [""] * (2 - len(sizes)) + [tail]
        return [
            self.scheme,
            *sizes,
            str(self.steps),
            _fmt(self.theta),
            _fmt(self.l2_error),
            str(self.max_policy_iters),
            f"{self.wall_ms:.3f}",
        ]


def write_errors_csv(records: Sequence[ErrorRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ERRORS_HEADER)
        for rec in records:
            writer.writerow(rec.to_row())
    return path


def l2_spacetime_error(
    trajectory: Union[Trajectory, Sequence[np.ndarray]],
    exact: ExactFn,
    mesh: TensorMesh,
    dt: float,
    steps: Optional[int] = None,
) -> float:
    """sqrt(sum_{n=0}^{m-1} sum_nodes dt * l * (v^n - v(tau_n))^2).

    A Trajectory contributes its levels 0..m-1; the terminal level m is left
    out. A plain sequence is taken as exactly those levels.
    """
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    if isinstance(trajectory, Trajectory):
        if len(trajectory.values) != len(trajectory.taus):
            raise ValueError(f"{len(trajectory.values)} value vectors for {len(trajectory.taus)} time levels")
        levels = trajectory.values[:-1]
        taus = trajectory.taus[:-1]
    else:
        levels = list(trajectory)
        taus = dt * np.arange(len(levels))
    if steps is not None and len(levels) != steps:
        raise ValueError(f"expected {steps} time levels, got {len(levels)}")
    if not levels:
        raise ValueError("no time levels to integrate")

    points = mesh.interior_points()
    weights = mesh.cell_volumes()
    total = 0.0
    for tau, v in zip(taus, levels):
        v = np.asarray(v, dtype=float)
        if v.shape != (mesh.size,):
            raise ValueError(f"value vector has shape {v.shape}, expected ({mesh.size},)")
        diff = v - np.asarray(exact(float(tau), points), dtype=float).reshape(mesh.size)
        total += dt * float(np.sum(weights * diff**2))
    return float(np.sqrt(total))


def l2_reference_error(trajectory: Trajectory, reference: Trajectory) -> float:
    """Space-time L2 distance to a finer run on the same mesh.

    Level n of the coarse run is compared with level n*k of the reference,
    k = m_ref / m, over n = 0..m-1 with the coarse dt.
    """
    m, m_ref = trajectory.config.steps, reference.config.steps
    if m_ref % m:
        raise ValueError(f"reference with {m_ref} steps does not refine {m} steps")
    if trajectory.mesh != reference.mesh:
        raise ValueError("reference run lives on a different mesh")
    if not np.isclose(trajectory.taus[-1], reference.taus[-1]):
        raise ValueError(f"horizons differ: {trajectory.taus[-1]} vs {reference.taus[-1]}")
    stride = m_ref // m
    weights = trajectory.mesh.cell_volumes()
    dt = trajectory.dt
    total = 0.0
    for n in range(m):
        diff = np.asarray(trajectory.values[n]) - np.asarray(reference.values[n * stride])
        total += dt * float(np.sum(weights * diff**2))
    return float(np.sqrt(total))


def order_from_pairs(steps: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt), with dt proportional to 1/m."""
    ms = np.asarray(steps, dtype=float)
    errs = np.asarray(errors, dtype=float)
    if ms.shape != errs.shape:
        raise ValueError("steps and errors differ in length")
    if len(np.unique(ms)) < 2:
        raise ValueError("need at least two distinct time-step counts to fit an order")
    if np.any(errs <= 0.0):
        raise ValueError("errors must be positive to fit an order on a log scale")
    slope, _ = np.polyfit(np.log(1.0 / ms), np.log(errs), 1)
    return float(slope)


def fit_temporal_order(records: Sequence[ErrorRecord]) -> float:
    if len(records) < 2:
        raise ValueError(f"need at least two records, got {len(records)}")
    meshes = {r.intervals for r in records}
    if len(meshes) != 1:
        raise ValueError(f"records mix spatial meshes {sorted(meshes)}")
    thetas = {r.theta for r in records}
    if len(thetas) != 1:
        raise ValueError(f"records mix theta values {sorted(thetas)}")
    slope = order_from_pairs([r.steps for r in records], [r.l2_error for r in records])
    logger.info("temporal order %.4f from %d records", slope, len(records))
    return slope
