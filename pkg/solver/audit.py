import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from discretization.mesh import TensorMesh
from discretization.operator import MMatrixReport, m_matrix_check, step_matrix
from problems.problem import ControlProblem
from solver.stepper import Assembler, resolve_assembler


logger = logging.getLogger("hjbfit.audit")


@dataclass
class AuditFailure:
    matrix: str
    tau: float
    alpha: float
    dt: float
    report: MMatrixReport

    def describe(self) -> str:
        where = f"tau={self.tau:.6g} alpha={self.alpha:.6g}"
        if self.matrix == "step":
            where += f" dt={self.dt:.6g}"
        return f"{self.matrix} matrix at {where}: {self.report.summary()}"


@dataclass
class AuditResult:
    scheme: str
    theta: float
    checked_operators: int = 0
    checked_steps: int = 0
    operator_failures: List[AuditFailure] = field(default_factory=list)
    step_failures: List[AuditFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.step_failures

    def summary_lines(self, max_listed: int = 10) -> List[str]:
        status = "all levels pass" if self.passed else f"{len(self.step_failures)} step matrices FAIL"
        lines = [
            f"[{self.scheme}] theta={self.theta:g}: {status} "
            f"({self.checked_steps} step matrices, {self.checked_operators} operators checked)",
        ]
        if self.operator_failures:
            lines.append(f"  warning: E fails the M-matrix check for {len(self.operator_failures)} (tau, alpha) pairs")
        for failure in (self.step_failures + self.operator_failures)[:max_listed]:
            lines.append(f"  {failure.describe()}")
        return lines


def audit_levels(problem: ControlProblem, steps: Sequence[int]) -> List[float]:
    """Distinct tau_{n+1} seen by the steps; one level suffices when E ignores tau."""
    if problem.time_homogeneous:
        return [float(problem.horizon)]
    taus = set()
    for m in steps:
        taus.update(float(t) for t in np.linspace(0.0, problem.horizon, m + 1)[1:])
    return sorted(taus)


def mmatrix_audit(
    assembler: Union[str, Assembler],
    problem: ControlProblem,
    mesh: TensorMesh,
    theta: float,
    steps: Sequence[int],
    rtol: float = 1e-10,
) -> AuditResult:
    """Check E(tau, alpha) and I + theta*dt*E for every control sample and level."""
    if not steps:
        raise ValueError("audit needs at least one time-step count")
    assemble = resolve_assembler(assembler)
    scheme = assembler if isinstance(assembler, str) else getattr(assembler, "__name__", "custom")
    result = AuditResult(scheme=scheme, theta=theta)
    dts = sorted({problem.horizon / m for m in steps}, reverse=True)

    for tau in audit_levels(problem, steps):
        for a in problem.controls.samples:
            op = assemble(problem, mesh, tau, np.full(mesh.size, a)).to_operator()
            report = m_matrix_check(op, rtol=rtol)
            result.checked_operators += 1
            if not report.is_m_matrix:
                result.operator_failures.append(AuditFailure("E", tau, a, 0.0, report))
            for dt in dts:
                step_report = m_matrix_check(step_matrix(op, theta, dt), rtol=rtol)
                result.checked_steps += 1
                if not step_report.is_m_matrix:
                    result.step_failures.append(AuditFailure("step", tau, a, dt, step_report))

    if result.operator_failures:
        logger.warning(
            "%s: E is not an M-matrix for %d of %d (tau, alpha) pairs",
            scheme,
            len(result.operator_failures),
            result.checked_operators,
        )
    logger.info("%s audit: %s", scheme, "pass" if result.passed else f"{len(result.step_failures)} step failures")
    return result
