import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
import scipy.sparse as sp

from discretization.mesh import TensorMesh


logger = logging.getLogger("hjbfit.operator")


@dataclass(frozen=True)
class SpatialOperator:
    """Semidiscrete right-hand side dv/dtau = -(E v + F) for one control assignment."""

    E: sp.csr_matrix
    F: np.ndarray
    alpha: np.ndarray
    tau: float
    scheme: str = "fitted"

    @property
    def size(self) -> int:
        return self.E.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.E @ v + self.F

    def triplets(self) -> List[Tuple[int, int, float]]:
        """(row, col, value) with 1-based flat indices, sorted row-major."""
        coo = self.E.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]) + 1, int(coo.col[k]) + 1, float(coo.data[k])) for k in order]


@dataclass
class Stencil:
    """Node-wise stencil arrays; leading dims (if any) batch over control samples.

    ``lower[i][..., p]`` multiplies v at p - e_i and ``upper[i][..., p]`` at
    p + e_i. Weights whose neighbour is a boundary node are already moved
    into ``rhs`` and are zero here.
    """

    mesh: TensorMesh
    tau: float
    alpha: np.ndarray
    diag: np.ndarray
    lower: List[np.ndarray]
    upper: List[np.ndarray]
    rhs: np.ndarray
    scheme: str = "fitted"

    @classmethod
    def empty(cls, mesh: TensorMesh, tau: float, alpha: np.ndarray, scheme: str) -> "Stencil":
        shape = np.shape(alpha)
        return cls(
            mesh=mesh,
            tau=float(tau),
            alpha=np.asarray(alpha, dtype=float),
            diag=np.zeros(shape),
            lower=[np.zeros(shape) for _ in range(mesh.dim)],
            upper=[np.zeros(shape) for _ in range(mesh.dim)],
            rhs=np.zeros(shape),
            scheme=scheme,
        )

    @property
    def batched(self) -> bool:
        return self.diag.ndim > 1

    def apply(self, v: np.ndarray) -> np.ndarray:
        """E v + F, broadcast over the batch dimension."""
        out = self.diag * v + self.rhs
        for i, stride in enumerate(self.mesh.strides):
            down = np.zeros_like(v)
            down[stride:] = v[:-stride]
            up = np.zeros_like(v)
            up[:-stride] = v[stride:]
            out = out + self.lower[i] * down + self.upper[i] * up
        return out

    def select(self, choice: np.ndarray) -> "Stencil":
        """Row-wise pick from a batched stencil: row p taken from sample choice[p]."""
        if not self.batched:
            raise ValueError("select() needs a stencil batched over control samples")
        cols = np.arange(self.diag.shape[-1])

        def _pick(arr: np.ndarray) -> np.ndarray:
            return arr[choice, cols]

        return Stencil(
            mesh=self.mesh,
            tau=self.tau,
            alpha=_pick(self.alpha),
            diag=_pick(self.diag),
            lower=[_pick(a) for a in self.lower],
            upper=[_pick(a) for a in self.upper],
            rhs=_pick(self.rhs),
            scheme=self.scheme,
        )

    def to_operator(self) -> SpatialOperator:
        if self.batched:
            raise ValueError("cannot build one operator from a batched stencil")
        n = self.mesh.size
        diagonals = [self.diag]
        offsets = [0]
        for i, stride in enumerate(self.mesh.strides):
            if stride >= n or self.mesh.shape[i] == 1:
                continue
            diagonals.append(self.upper[i][: n - stride])
            offsets.append(stride)
            diagonals.append(self.lower[i][stride:])
            offsets.append(-stride)
        E = sp.diags(diagonals, offsets, shape=(n, n), format="csr")
        E.eliminate_zeros()
        if not np.all(np.isfinite(E.data)) or not np.all(np.isfinite(self.rhs)):
            raise ValueError(f"non-finite entries in {self.scheme} operator at tau={self.tau}")
        return SpatialOperator(E=E, F=np.array(self.rhs, dtype=float), alpha=np.array(self.alpha), tau=self.tau, scheme=self.scheme)


@dataclass
class MMatrixReport:
    is_m_matrix: bool
    worst_offdiag_violation: float
    worst_dominance_slack: float
    offending: List[int]
    nonpositive_diagonal: List[int] = field(default_factory=list)
    positive_offdiagonal: List[Tuple[int, int]] = field(default_factory=list)

    def summary(self) -> str:
        if self.is_m_matrix:
            return f"M-matrix (min dominance slack {self.worst_dominance_slack:.3e})"
        return (
            f"not an M-matrix: {len(self.offending)} offending rows, "
            f"max positive off-diagonal {self.worst_offdiag_violation:.3e}, "
            f"min dominance slack {self.worst_dominance_slack:.3e}"
        )


def m_matrix_check(
    op: Union[SpatialOperator, sp.spmatrix, np.ndarray],
    rtol: float = 1e-10,
    max_reported: int = 50,
) -> MMatrixReport:
    """Sign pattern plus weak row dominance |e_ii| >= sum_j |e_ij|.

    Dominance is judged with a relative tolerance per row so that rows whose
    exact slack is zero are not failed by rounding.
    """
    matrix = op.E if isinstance(op, SpatialOperator) else op
    A = sp.csr_matrix(matrix, dtype=float)
    diag = A.diagonal()
    off = (A - sp.diags(diag)).tocoo()
    off_mask = off.row != off.col
    rows, cols, vals = off.row[off_mask], off.col[off_mask], off.data[off_mask]

    positive = vals > 0.0
    worst_off = float(vals[positive].max()) if positive.any() else 0.0
    off_abs = np.bincount(rows, weights=np.abs(vals), minlength=A.shape[0])
    slack = np.abs(diag) - off_abs
    tol = rtol * np.maximum(np.abs(diag), off_abs)
    weak = slack < -tol
    bad_diag = diag <= 0.0

    offending_rows = set(np.flatnonzero(weak).tolist()) | set(np.flatnonzero(bad_diag).tolist())
    offending_rows |= set(rows[positive].tolist())
    offending = sorted(r + 1 for r in offending_rows)

    return MMatrixReport(
        is_m_matrix=not offending,
        worst_offdiag_violation=worst_off,
        worst_dominance_slack=float(slack.min()) if slack.size else 0.0,
        offending=offending[:max_reported],
        nonpositive_diagonal=[int(r) + 1 for r in np.flatnonzero(bad_diag)[:max_reported]],
        positive_offdiagonal=[(int(r) + 1, int(c) + 1) for r, c in zip(rows[positive][:max_reported], cols[positive][:max_reported])],
    )


def step_matrix(op: SpatialOperator, theta: float, dt: float) -> sp.csr_matrix:
    """I + theta*dt*E, the matrix solved at each implicit step."""
    return (sp.identity(op.size, format="csr") + (theta * dt) * op.E).tocsr()

