"""Three-asset Merton portfolio problem with its closed-form value function.

The wealth in the first asset is steered by the fraction alpha in [0, 1]
invested in the risky position; the other two assets follow fixed geometric
dynamics. With power utility the value function separates as
psi(tau) * x^p y^p z^p / p^3, which gives an exact reference for the
numerical schemes.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from problems.problem import BoundaryPolicy, ControlProblem, ControlSet


logger = logging.getLogger("hjbfit.merton")

PSI_DERIVED = "derived"
PSI_AS_PRINTED = "as-printed"
PSI_MODES = (PSI_DERIVED, PSI_AS_PRINTED)


@dataclass(frozen=True)
class MertonParams:
    r1: float
    mu1: float
    mu2: float
    mu3: float
    sigma: float
    p: float
    T: float
    bounds: Tuple[Tuple[float, float], ...] = ((0.0, 0.5), (0.0, 0.25), (0.0, 0.5))
    intervals: Tuple[int, ...] = (10, 10, 10)
    # rates quoted alongside some parameter sets; no coefficient uses them
    unused: Dict[str, float] = field(default_factory=dict)
    # published L2 errors per time-step count, for side-by-side reports
    reference_errors: Dict[str, Dict[int, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"utility exponent p must lie in (0, 1), got {self.p}")
        if not self.mu1 > self.r1:
            raise ValueError(f"need mu1 > r1, got mu1={self.mu1}, r1={self.r1}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.T > 0.0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if len(self.bounds) != 3 or len(self.intervals) != 3:
            raise ValueError("the Merton benchmark is three-dimensional")

    def with_overrides(self, **changes) -> "MertonParams":
        return replace(self, **changes)


PRESETS: Dict[str, MertonParams] = {
    "table1": MertonParams(
        r1=0.0449,
        mu1=0.0657,
        mu2=0.067,
        mu3=0.066,
        sigma=0.2537,
        p=0.13,
        T=1.0,
        intervals=(10, 10, 10),
        reference_errors={
            "fitted": {50: 1.30, 100: 0.863, 150: 0.631, 200: 0.465},
            "fdm": {50: 1.36, 100: 0.921, 150: 0.698, 200: 0.515},
        },
    ),
    "table2": MertonParams(
        r1=0.0449,
        mu1=0.0657,
        mu2=0.0656,
        mu3=0.0655,
        sigma=0.2537,
        p=0.17,
        T=1.5,
        intervals=(8, 9, 10),
        unused={"r2": 0.0448 / 3.0, "r3": 0.0447},
        reference_errors={
            "fitted": {50: 0.597, 100: 0.399, 150: 0.230, 200: 0.224},
            "fdm": {50: 0.599, 100: 0.412, 150: 0.318, 200: 0.240},
        },
    ),
}


def load_preset(name: str) -> MertonParams:
    try:
        params = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown Merton parameter set {name!r}; choose from {sorted(PRESETS)}") from None
    if params.unused:
        logger.info("parameter set %s carries unused rates %s", name, params.unused)
    return params


# -------------------- growth rate and optimal control --------------------
def growth_rate(params: MertonParams, alpha: np.ndarray) -> np.ndarray:
    """The alpha-quadratic whose supremum over [0, 1] is rho."""
    s2, p = params.sigma**2, params.p
    a = np.asarray(alpha, dtype=float)
    return (
        params.r1
        + (params.mu1 - params.r1) * a
        + params.mu2
        + params.mu3
        + 0.5 * s2 * a**2 * (p - 1.0)
        + s2 * (p - 1.0)
        + 2.0 * s2 * a * p
        + s2 * p
    )


def compute_rho(params: MertonParams, control_samples: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """(rho, alpha*) from the clipped stationary point of the concave quadratic."""
    s2, p = params.sigma**2, params.p
    stationary = ((params.mu1 - params.r1) + 2.0 * s2 * p) / (s2 * (1.0 - p))
    alpha_star = float(np.clip(stationary, 0.0, 1.0))
    rho = float(growth_rate(params, alpha_star))
    if control_samples is not None and len(control_samples):
        samples = np.asarray(control_samples, dtype=float)
        scanned = growth_rate(params, samples)
        best = int(np.argmax(scanned))
        if scanned[best] > rho + 1e-12:
            logger.warning("scan beats closed form: alpha=%.6g gives %.15g > %.15g", samples[best], scanned[best], rho)
    return rho, alpha_star


# -------------------- exact solution --------------------
def psi(params: MertonParams, rho: float, tau: np.ndarray, psi_sign: str = PSI_DERIVED) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if psi_sign == PSI_DERIVED:
        return np.exp(params.p * rho * tau)
    if psi_sign == PSI_AS_PRINTED:
        return np.exp(params.p * (tau - params.T) * rho)
    raise ValueError(f"psi_sign must be one of {PSI_MODES}, got {psi_sign!r}")


def terminal_utility(params: MertonParams, points: np.ndarray) -> np.ndarray:
    pts = np.clip(np.asarray(points, dtype=float), 0.0, None)
    return np.prod(pts**params.p, axis=-1) / params.p**3


def exact_value(params: MertonParams, rho: float, tau: float, point: np.ndarray, psi_sign: str = PSI_DERIVED) -> np.ndarray:
    pts = np.asarray(point, dtype=float)
    if np.any(pts < 0.0):
        raise ValueError("exact value is defined for nonnegative coordinates only")
    return psi(params, rho, tau, psi_sign) * terminal_utility(params, pts)


@dataclass(frozen=True)
class AnsatzSolution:
    params: MertonParams
    rho: float
    alpha_star: float
    psi_sign: str = PSI_DERIVED

    def __call__(self, tau: float, points: np.ndarray) -> np.ndarray:
        return exact_value(self.params, self.rho, tau, points, self.psi_sign)


def ansatz(params: MertonParams, psi_sign: str = PSI_DERIVED, control_samples: Optional[Sequence[float]] = None) -> AnsatzSolution:
    rho, alpha_star = compute_rho(params, control_samples)
    return AnsatzSolution(params=params, rho=rho, alpha_star=alpha_star, psi_sign=psi_sign)


# -------------------- divergence-form coefficients --------------------
def _safe_inverse(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.divide(1.0, values, out=np.zeros_like(values), where=values > 0.0)


def merton_problem(params: MertonParams, samples: int = 101, psi_sign: str = PSI_DERIVED) -> ControlProblem:
    s2 = params.sigma**2
    r1, mu1, mu2, mu3 = params.r1, params.mu1, params.mu2, params.mu3
    solution = ansatz(params, psi_sign)

    def a_bar_x(tau, pts, a):
        return 0.5 * s2 * np.asarray(a) ** 2

    def a_bar_yz(tau, pts, a):
        return np.full(np.broadcast_shapes(np.shape(pts)[:-1], np.shape(a)), 0.5 * s2)

    def b_x(tau, pts, a):
        a = np.asarray(a)
        return r1 + (mu1 - r1) * a - s2 * a - s2 * a**2

    def b_y(tau, pts, a):
        return mu2 - 0.5 * s2 * np.asarray(a) - 1.5 * s2

    def b_z(tau, pts, a):
        return mu3 - 0.5 * s2 * np.asarray(a) - 1.5 * s2

    def c(tau, pts, a):
        a = np.asarray(a)
        return -(r1 + (mu1 - r1) * a - 2.0 * s2 * a - s2 * a**2 + mu2 + mu3 - 3.0 * s2)

    # a_ir = d_ir * x * y * z
    def d_xy(tau, pts, a):
        return 0.5 * s2 * np.asarray(a) * _safe_inverse(pts[..., 2])

    def d_xz(tau, pts, a):
        return 0.5 * s2 * np.asarray(a) * _safe_inverse(pts[..., 1])

    def d_yz(tau, pts, a):
        return 0.5 * s2 * _safe_inverse(pts[..., 0]) * np.ones(np.shape(a))

    def terminal(pts):
        return terminal_utility(params, pts)

    def boundary(tau, pts):
        return solution(tau, pts)

    return ControlProblem(
        name="merton3d",
        dim=3,
        horizon=params.T,
        controls=ControlSet.uniform(0.0, 1.0, samples),
        a_bar=(a_bar_x, a_bar_yz, a_bar_yz),
        b=(b_x, b_y, b_z),
        c=c,
        d={(0, 1): d_xy, (0, 2): d_xz, (1, 2): d_yz},
        terminal=terminal,
        boundary=boundary,
        boundary_policy=BoundaryPolicy.degenerate_zero(3),
        time_homogeneous=True,
        tag=f"{params!r}|{psi_sign}",
    )
