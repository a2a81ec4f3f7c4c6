import csv
import logging
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from discretization.fdm_baseline import fdm_stencil
from discretization.fitted_fvm import fitted_stencil
from discretization.mesh import TensorMesh
from discretization.operator import Stencil, step_matrix
from problems.problem import ControlProblem
from utils.cache import OPERATOR_CACHE, CacheManager
from utils.config import get_linear_tolerance, get_max_policy_iterations, get_policy_tolerance


logger = logging.getLogger("hjbfit.stepper")

Assembler = Callable[[ControlProblem, TensorMesh, float, np.ndarray], Stencil]

ASSEMBLERS: Dict[str, Assembler] = {
    "fitted": fitted_stencil,
    "fdm": fdm_stencil,
}


class SolverError(RuntimeError):
    """A linear solve produced a non-finite or inaccurate solution."""


def resolve_assembler(scheme: Union[str, Assembler]) -> Assembler:
    if callable(scheme):
        return scheme
    try:
        return ASSEMBLERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(ASSEMBLERS)}") from None


def _scheme_name(scheme: Union[str, Assembler]) -> str:
    return scheme if isinstance(scheme, str) else getattr(scheme, "__name__", "custom")


@dataclass(frozen=True)
class StepperConfig:
    theta: float = 1.0
    steps: int = 100
    tolerance: float = field(default_factory=get_policy_tolerance)
    max_iterations: int = field(default_factory=get_max_policy_iterations)
    linear_tolerance: float = field(default_factory=get_linear_tolerance)

    def __post_init__(self) -> None:
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.steps < 1:
            raise ValueError(f"need at least one time step, got {self.steps}")
        if not self.tolerance > 0.0:
            raise ValueError(f"policy tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max policy iterations must be >= 1, got {self.max_iterations}")
        if not self.linear_tolerance > 0.0:
            raise ValueError(f"linear tolerance must be positive, got {self.linear_tolerance}")

    def dt(self, horizon: float) -> float:
        return horizon / self.steps

    def levels(self, horizon: float) -> np.ndarray:
        """tau_0 = 0, ..., tau_m = horizon."""
        return np.linspace(0.0, horizon, self.steps + 1)


@dataclass
class PolicyState:
    v: np.ndarray
    alpha: np.ndarray
    alpha_index: np.ndarray
    iterations_used: int
    residual: float
    converged: bool
    residual_history: List[float] = field(default_factory=list)


@dataclass
class Trajectory:
    """Values at tau_0..tau_m and the policy-iteration outcome of every step."""

    scheme: str
    mesh: TensorMesh
    config: StepperConfig
    taus: np.ndarray
    values: List[np.ndarray]
    states: List[PolicyState]

    @property
    def dt(self) -> float:
        return float(self.taus[1] - self.taus[0])

    @property
    def max_policy_iterations(self) -> int:
        return max((s.iterations_used for s in self.states), default=0)

    @property
    def final_value(self) -> np.ndarray:
        return self.values[-1]

    @property
    def final_alpha(self) -> np.ndarray:
        return self.states[-1].alpha

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.states)


# -------------------- Hamiltonian --------------------
def hamiltonian_values(
    next_stencil: Stencil,
    now_stencil: Optional[Stencil],
    v_hat: np.ndarray,
    v_now: np.ndarray,
    theta: float,
    dt: float,
) -> np.ndarray:
    """theta*dt*(A v_hat + G)^{n+1} + (1-theta)*dt*(A v + G)^n with A = -E, G = -F.

    Stencils may be batched over control samples; row p only depends on the
    control at node p, so the result is per (sample, node).
    """
    out = -theta * dt * next_stencil.apply(v_hat)
    if theta < 1.0:
        if now_stencil is None:
            raise ValueError("theta < 1 needs the stencil at the current level")
        out = out - (1.0 - theta) * dt * now_stencil.apply(v_now)
    return out


def hamiltonian_row(
    assembler: Union[str, Assembler],
    problem: ControlProblem,
    mesh: TensorMesh,
    tau_next: float,
    tau_now: float,
    v_hat: np.ndarray,
    v_now: np.ndarray,
    node: int,
    alpha_sample: float,
    theta: float,
    dt: float,
) -> float:
    """Discrete Hamiltonian at one node (0-based position) for one control sample."""
    if not 0 <= node < mesh.size:
        raise ValueError(f"node {node} outside 0..{mesh.size - 1}")
    lo, hi = problem.controls.lo, problem.controls.hi
    if not lo <= alpha_sample <= hi:
        raise ValueError(f"control {alpha_sample} outside [{lo}, {hi}]")
    assemble = resolve_assembler(assembler)
    alpha = np.full(mesh.size, float(alpha_sample))
    nxt = assemble(problem, mesh, tau_next, alpha)
    now = assemble(problem, mesh, tau_now, alpha) if theta < 1.0 else None
    return float(hamiltonian_values(nxt, now, np.asarray(v_hat, float), np.asarray(v_now, float), theta, dt)[node])


# -------------------- linear solve --------------------
def solve_linear(A: sp.csr_matrix, rhs: np.ndarray, linear_tolerance: float) -> np.ndarray:
    x = spla.spsolve(A.tocsc(), rhs)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve returned non-finite values (singular step matrix?)")
    scale = max(float(np.linalg.norm(rhs, np.inf)), np.finfo(float).tiny)
    rel = float(np.linalg.norm(A @ x - rhs, np.inf)) / scale
    if rel > linear_tolerance:
        raise SolverError(f"linear solve residual {rel:.3e} exceeds tolerance {linear_tolerance:.1e}")
    return x


class _StencilSource:
    """Batched stencils over all control samples.

    Cache keys carry the scheme, tau, the problem identity, every mesh node and
    the control samples. Untagged problems get a key private to this source.
    """

    def __init__(self, assembler: Assembler, scheme: str, problem: ControlProblem, mesh: TensorMesh,
                 cache: Optional[CacheManager]) -> None:
        self.assembler = assembler
        self.scheme = scheme
        self.problem = problem
        self.mesh = mesh
        self.cache = cache
        samples = problem.controls.values
        self.samples = samples
        self.batch_alpha = np.repeat(samples[:, None], mesh.size, axis=1)
        identity = problem.tag or f"untagged-{uuid.uuid4().hex}"
        self.tag = CacheManager.generate_key(
            {
                "problem": [problem.name, identity],
                "nodes": [list(ax.nodes) for ax in mesh.axes],
                "controls": samples.tolist(),
            }
        )

    def at(self, tau: float) -> Stencil:
        key = CacheManager.operator_key(self.scheme, float(tau), tag=self.tag)
        if self.cache is not None:
            hit = self.cache.get(key, cache_type=OPERATOR_CACHE)
            if hit is not None:
                return hit
        stencil = self.assembler(self.problem, self.mesh, float(tau), self.batch_alpha)
        if self.cache is not None:
            self.cache.set(key, stencil, cache_type=OPERATOR_CACHE)
        return stencil


def _policy_iterate(
    source: _StencilSource,
    v_now: np.ndarray,
    tau_now: float,
    tau_next: float,
    config: StepperConfig,
) -> PolicyState:
    theta = config.theta
    dt = tau_next - tau_now
    nxt = source.at(tau_next)
    now = source.at(tau_now) if theta < 1.0 else None
    cols = np.arange(source.mesh.size)
    # explicit part of every candidate row, fixed during the iteration
    explicit = (1.0 - theta) * dt * now.apply(v_now) if now is not None else None

    v_hat = np.array(v_now, dtype=float)
    choice: Optional[np.ndarray] = None
    history: List[float] = []
    residual = float("inf")
    converged = False
    solves = 0

    for _ in range(config.max_iterations):
        H = -theta * dt * nxt.apply(v_hat)
        if explicit is not None:
            H = H - explicit
        # first maximum wins; samples are sorted so ties go to the smallest control
        new_choice = np.argmax(H, axis=0)
        if choice is not None and np.array_equal(new_choice, choice):
            residual = 0.0
            converged = True
            break
        choice = new_choice

        op = nxt.select(choice).to_operator()
        rhs = v_now - theta * dt * op.F
        if explicit is not None:
            rhs = rhs - explicit[choice, cols]
        v_new = solve_linear(step_matrix(op, theta, dt), rhs, config.linear_tolerance)
        solves += 1

        residual = float(np.max(np.abs(v_new - v_hat))) if v_new.size else 0.0
        if history and residual > history[-1]:
            logger.warning("policy residual increased at tau=%.6g: %.3e -> %.3e", tau_next, history[-1], residual)
        history.append(residual)
        v_hat = v_new
        if residual <= config.tolerance:
            converged = True
            break

    if not converged:
        logger.warning(
            "policy iteration not converged at tau=%.6g after %d solves (residual %.3e)", tau_next, solves, residual
        )
    logger.debug("tau=%.6g: %d solves, residual %.3e", tau_next, solves, residual)
    return PolicyState(
        v=v_hat,
        alpha=source.samples[choice],
        alpha_index=np.asarray(choice),
        iterations_used=solves,
        residual=residual,
        converged=converged,
        residual_history=history,
    )


def policy_step(
    assembler: Union[str, Assembler],
    problem: ControlProblem,
    mesh: TensorMesh,
    v_now: np.ndarray,
    tau_now: float,
    tau_next: float,
    config: StepperConfig,
    cache: Optional[CacheManager] = None,
) -> PolicyState:
    """One theta-step from tau_now to tau_next with per-node policy iteration."""
    v_now = np.asarray(v_now, dtype=float)
    if v_now.shape != (mesh.size,):
        raise ValueError(f"value vector has shape {v_now.shape}, expected ({mesh.size},)")
    if not tau_next > tau_now:
        raise ValueError(f"need tau_next > tau_now, got {tau_now} -> {tau_next}")
    source = _StencilSource(resolve_assembler(assembler), _scheme_name(assembler), problem, mesh, cache)
    return _policy_iterate(source, v_now, tau_now, tau_next, config)


def initial_value(problem: ControlProblem, mesh: TensorMesh) -> np.ndarray:
    v0 = np.asarray(problem.terminal(mesh.interior_points()), dtype=float).reshape(mesh.size)
    if not np.all(np.isfinite(v0)):
        raise ValueError(f"terminal data of {problem.name} is not finite on the mesh")
    return v0


def solve(
    assembler: Union[str, Assembler],
    problem: ControlProblem,
    mesh: TensorMesh,
    config: StepperConfig,
    cache: Optional[CacheManager] = None,
    checkpoint: Optional[Union[str, Path]] = None,
) -> Trajectory:
    """March tau = T - t from 0 to T in uniform steps."""
    if mesh.dim != problem.dim:
        raise ValueError(f"mesh is {mesh.dim}-D but problem is {problem.dim}-D")
    scheme = _scheme_name(assembler)
    # two levels are live at a time
    cache = cache if cache is not None else CacheManager(max_entries=4)
    source = _StencilSource(resolve_assembler(assembler), scheme, problem, mesh, cache)
    taus = config.levels(problem.horizon)

    values = [initial_value(problem, mesh)]
    states: List[PolicyState] = []
    for n in range(config.steps):
        state = _policy_iterate(source, values[-1], float(taus[n]), float(taus[n + 1]), config)
        states.append(state)
        values.append(state.v)

    trajectory = Trajectory(scheme=scheme, mesh=mesh, config=config, taus=taus, values=values, states=states)
    logger.info(
        "%s %s: m=%d theta=%g, max %d policy solves, %s",
        scheme,
        problem.name,
        config.steps,
        config.theta,
        trajectory.max_policy_iterations,
        "all steps converged" if trajectory.all_converged else "some steps NOT converged",
    )
    if checkpoint is not None:
        write_checkpoint(trajectory, checkpoint)
    return trajectory


def write_checkpoint(trajectory: Trajectory, path: Union[str, Path]) -> Path:
    """level, tau, flat_index (1-based), value, alpha; alpha is empty at level 0."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "tau", "flat_index", "value", "alpha"])
        for level, (tau, v) in enumerate(zip(trajectory.taus, trajectory.values)):
            alpha = trajectory.states[level - 1].alpha if level > 0 else None
            for p in range(v.size):
                a = "" if alpha is None else f"{alpha[p]:.12e}"
                writer.writerow([level, f"{tau:.12e}", p + 1, f"{v[p]:.12e}", a])
    logger.info("wrote checkpoint %s", path)
    return path
