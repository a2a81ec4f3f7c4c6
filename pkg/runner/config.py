import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from discretization.mesh import TensorMesh, build_mesh
from problems.merton import PSI_DERIVED, PSI_MODES, MertonParams, load_preset, merton_problem, ansatz
from problems.problem import ControlProblem
from problems.smoke import SmokeParams, smoke_exact, smoke_problem
from solver.stepper import StepperConfig
from utils.config import (
    get_control_samples,
    get_linear_tolerance,
    get_max_policy_iterations,
    get_output_dir,
    get_policy_tolerance,
)


logger = logging.getLogger("hjbfit.runner")

SCHEMES = ("fitted", "fdm")
PRESET_NAMES = ("table1", "table2", "smoke")


class ConfigError(ValueError):
    """Run configuration that cannot be turned into a problem, mesh and stepper."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSpec(_Strict):
    name: Literal["merton", "smoke"] = "merton"
    preset: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    psi_sign: str = PSI_DERIVED
    samples: int = Field(default_factory=get_control_samples, ge=1)

    @field_validator("psi_sign")
    @classmethod
    def _psi(cls, v: str) -> str:
        if v not in PSI_MODES:
            raise ValueError(f"psi_sign must be one of {PSI_MODES}")
        return v


class AxisSpec(_Strict):
    lo: Optional[float] = None
    hi: Optional[float] = None
    n: Optional[int] = Field(default=None, ge=2)
    nodes: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_form(self) -> "AxisSpec":
        uniform = self.lo is not None and self.hi is not None and self.n is not None
        if uniform == (self.nodes is not None):
            raise ValueError("an axis needs either lo/hi/n or an explicit nodes list")
        return self


class MeshSpec(_Strict):
    axes: List[AxisSpec] = Field(default_factory=list)


class TimeSpec(_Strict):
    steps: List[int] = Field(default_factory=lambda: [100], min_length=1)
    theta: float = Field(default=1.0, ge=0.5, le=1.0)
    # finer run on the same mesh for time-only errors
    reference_steps: Optional[int] = Field(default=None, ge=2)

    @field_validator("steps")
    @classmethod
    def _positive(cls, v: List[int]) -> List[int]:
        if any(m < 1 for m in v):
            raise ValueError("every time-step count must be >= 1")
        return v

    @model_validator(mode="after")
    def _reference_divides(self) -> "TimeSpec":
        ref = self.reference_steps
        if ref is None:
            return self
        if ref <= max(self.steps):
            raise ValueError(f"reference_steps={ref} must exceed every time-step count")
        bad = [m for m in self.steps if ref % m]
        if bad:
            raise ValueError(f"reference_steps={ref} is not a multiple of {bad}")
        return self


class SolverSpec(_Strict):
    scheme: Literal["fitted", "fdm", "both"] = "fitted"
    tolerance: float = Field(default_factory=get_policy_tolerance, gt=0.0)
    max_iterations: int = Field(default_factory=get_max_policy_iterations, ge=1)
    linear_tolerance: float = Field(default_factory=get_linear_tolerance, gt=0.0)

    @property
    def schemes(self) -> List[str]:
        return list(SCHEMES) if self.scheme == "both" else [self.scheme]


class OutputSpec(_Strict):
    directory: str = Field(default_factory=get_output_dir)
    dump_operator: bool = False
    dump_policy: bool = False
    mmatrix_audit: bool = False
    checkpoint: bool = False
    operator_alpha: Optional[float] = None


class RunConfig(_Strict):
    problem: ProblemSpec = Field(default_factory=ProblemSpec)
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    time: TimeSpec = Field(default_factory=TimeSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    def stepper_config(self, steps: int) -> StepperConfig:
        return StepperConfig(
            theta=self.time.theta,
            steps=steps,
            tolerance=self.solver.tolerance,
            max_iterations=self.solver.max_iterations,
            linear_tolerance=self.solver.linear_tolerance,
        )

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


@dataclass
class ProblemSetup:
    problem: ControlProblem
    mesh: TensorMesh
    exact: Callable[[float, np.ndarray], np.ndarray]
    reference_errors: Dict[str, Dict[int, float]]
    params: Union[MertonParams, SmokeParams]


def _raise_from(exc: ValidationError, source: str) -> ConfigError:
    problems = "; ".join(
        f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
    )
    return ConfigError(f"invalid configuration in {source}: {problems}")


def parse_config(data: Dict[str, Any], source: str = "<dict>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise _raise_from(exc, source) from None


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path} is not valid TOML: {exc}") from None
    return parse_config(data, source=str(path))


def preset_config(name: str) -> RunConfig:
    if name in ("table1", "table2"):
        return parse_config(
            {
                "problem": {"name": "merton", "preset": name},
                "time": {"steps": [50, 100, 150, 200], "theta": 1.0},
                "solver": {"scheme": "both"},
            },
            source=f"preset {name}",
        )
    if name == "smoke":
        return parse_config(
            {
                "problem": {"name": "smoke", "samples": 11},
                "mesh": {"axes": [{"lo": 0.0, "hi": 1.0, "n": 20}]},
                "time": {"steps": [10, 20, 40, 80], "theta": 1.0},
                "solver": {"scheme": "fitted"},
            },
            source="preset smoke",
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {list(PRESET_NAMES)}")


def with_overrides(config: RunConfig, overrides: Dict[str, Dict[str, Any]]) -> RunConfig:
    """Merge section-wise overrides (None values ignored) and re-validate."""
    data = config.model_dump()
    for section, values in overrides.items():
        for key, value in values.items():
            if value is not None:
                data[section][key] = value
    return parse_config(data, source="overrides")


def _merton_setup(config: RunConfig) -> ProblemSetup:
    spec = config.problem
    try:
        params = load_preset(spec.preset or "table1")
        if spec.params:
            params = params.with_overrides(**spec.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"merton parameters: {exc}") from None
    axes = [ax.model_dump() for ax in config.mesh.axes] or [
        {"lo": lo, "hi": hi, "n": n} for (lo, hi), n in zip(params.bounds, params.intervals)
    ]
    if len(axes) != 3:
        raise ConfigError(f"the merton problem needs 3 mesh axes, got {len(axes)}")
    mesh = build_mesh(axes)
    if any(ax.lo != 0.0 for ax in mesh.axes):
        # zero boundary values belong to the degenerate x_i = 0 faces
        raise ConfigError("merton mesh axes must start at 0")
    problem = merton_problem(params, samples=spec.samples, psi_sign=spec.psi_sign)
    exact = ansatz(params, spec.psi_sign)
    return ProblemSetup(problem=problem, mesh=mesh, exact=exact, reference_errors=params.reference_errors, params=params)


def _smoke_setup(config: RunConfig) -> ProblemSetup:
    spec = config.problem
    axes = [ax.model_dump() for ax in config.mesh.axes] or [{"lo": 0.0, "hi": 1.0, "n": 20}]
    try:
        params = SmokeParams(dim=len(axes), samples=spec.samples, **spec.params)
    except TypeError as exc:
        raise ConfigError(f"smoke parameters: {exc}") from None
    problem = smoke_problem(params)
    return ProblemSetup(problem=problem, mesh=build_mesh(axes), exact=smoke_exact(params), reference_errors={}, params=params)


def build_setup(config: RunConfig) -> ProblemSetup:
    try:
        if config.problem.name == "merton":
            return _merton_setup(config)
        return _smoke_setup(config)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
