from dataclasses import dataclass
from typing import Callable

import numpy as np

from problems.problem import BoundaryPolicy, ControlProblem, ControlSet, constant


@dataclass(frozen=True)
class SmokeParams:
    dim: int = 1
    a_bar: float = 0.1
    b: float = 0.05
    c0: float = -0.2
    kappa: float = 0.5
    alpha_ref: float = 0.5
    horizon: float = 1.0
    samples: int = 11

    @property
    def rate(self) -> float:
        """lambda in v = exp(lambda * tau)."""
        return self.dim * self.b + self.c0


def smoke_problem(params: SmokeParams = SmokeParams()) -> ControlProblem:
    """Constant coefficients, c(alpha) = c0 - kappa (alpha - alpha_ref)^2, terminal data 1.

    Spatially constant functions are in the kernel of the fitted flux
    differences on uniform meshes, so v = exp(lambda tau) solves both the PDE
    and the semidiscrete system; only the time error remains.
    """
    rate = params.rate

    def c(tau, pts, a):
        return params.c0 - params.kappa * (np.asarray(a) - params.alpha_ref) ** 2

    def terminal(pts):
        return np.ones(np.shape(pts)[:-1])

    def boundary(tau, pts):
        return np.full(np.shape(pts)[:-1], np.exp(rate * tau))

    if params.samples == 1:
        controls = ControlSet.singleton(params.alpha_ref)
    else:
        controls = ControlSet.uniform(0.0, 1.0, params.samples)
        if params.alpha_ref not in controls.samples:
            raise ValueError(f"alpha_ref={params.alpha_ref} is not on the {params.samples}-point control grid")

    return ControlProblem(
        name="smoke",
        dim=params.dim,
        horizon=params.horizon,
        controls=controls,
        a_bar=tuple(constant(params.a_bar) for _ in range(params.dim)),
        b=tuple(constant(params.b) for _ in range(params.dim)),
        c=c,
        terminal=terminal,
        boundary=boundary,
        boundary_policy=BoundaryPolicy.uniform(params.dim),
        time_homogeneous=True,
        tag=repr(params),
    )


def smoke_exact(params: SmokeParams = SmokeParams()) -> Callable[[float, np.ndarray], np.ndarray]:
    rate = params.rate

    def _exact(tau: float, points: np.ndarray) -> np.ndarray:
        return np.full(np.shape(points)[:-1], np.exp(rate * tau))

    return _exact
