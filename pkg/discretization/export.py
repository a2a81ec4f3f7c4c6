import csv
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from discretization.mesh import TensorMesh
from discretization.operator import SpatialOperator


def _fmt(value: float) -> str:
    return f"{value:.12e}"


def write_operator_csv(op: SpatialOperator, matrix_path: Union[str, Path], rhs_path: Union[str, Path]) -> Tuple[Path, Path]:
    """E as 1-based (row, col, value) triplets and F as (row, value)."""
    matrix_path, rhs_path = Path(matrix_path), Path(rhs_path)
    matrix_path.parent.mkdir(parents=True, exist_ok=True)
    with matrix_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for row, col, value in op.triplets():
            writer.writerow([row, col, _fmt(value)])
    with rhs_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "value"])
        for p, value in enumerate(op.F):
            writer.writerow([p + 1, _fmt(float(value))])
    return matrix_path, rhs_path


def write_policy_csv(mesh: TensorMesh, alpha: Sequence[float], path: Union[str, Path]) -> Path:
    """flat_index, one coordinate column per axis, alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (mesh.size,):
        raise ValueError(f"policy has shape {alpha.shape}, expected ({mesh.size},)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = mesh.interior_points()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["flat_index", *mesh.names, "alpha"])
        for p in range(mesh.size):
            writer.writerow([p + 1, *(_fmt(float(c)) for c in points[p]), _fmt(float(alpha[p]))])
    return path
