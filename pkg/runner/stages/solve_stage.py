import logging
import time
from pathlib import Path
from typing import Any, Dict, List

from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage
from solver.stepper import solve
from utils.config import is_enabled


logger = logging.getLogger("hjbfit.runner")


class SolveStage(BaseStage):
    """March every requested (scheme, m) pair; keeps trajectories in sweep order."""

    name = "solve"
    requires = ("setup",)

    def enabled(self, context: Dict[str, Any]) -> bool:
        return context.get("mode") != "audit"

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        config = context["config"]
        setup = context["setup"]
        timing = is_enabled("timing")
        runs: List[Dict[str, Any]] = []
        for scheme in config.solver.schemes:
            for m in config.time.steps:
                if callback:
                    callback(f"Solving {scheme} with m={m}, theta={config.time.theta:g}")
                checkpoint = None
                if config.output.checkpoint and context.get("write", True):
                    checkpoint = Path(config.output.directory) / f"checkpoint_{scheme}_m{m}.csv"
                start = time.perf_counter()
                trajectory = solve(scheme, setup.problem, setup.mesh, config.stepper_config(m), checkpoint=checkpoint)
                wall_ms = (time.perf_counter() - start) * 1000.0 if timing else 0.0
                runs.append({"scheme": scheme, "steps": m, "trajectory": trajectory, "wall_ms": wall_ms})
                log_stage(
                    context,
                    self.name,
                    f"{scheme} m={m}: max_policy_iters={trajectory.max_policy_iterations} converged={trajectory.all_converged}",
                )
        context["runs"] = runs

        ref_steps = config.time.reference_steps
        if ref_steps is not None:
            references: Dict[str, Any] = {}
            for scheme in config.solver.schemes:
                if callback:
                    callback(f"Solving {scheme} reference with m={ref_steps}")
                references[scheme] = solve(scheme, setup.problem, setup.mesh, config.stepper_config(ref_steps))
                log_stage(context, self.name, f"{scheme} reference m={ref_steps} done")
            context["references"] = references
        return context
