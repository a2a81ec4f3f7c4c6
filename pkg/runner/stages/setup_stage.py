import logging
from typing import Any, Dict

from problems.problem import validate
from runner.config import build_setup
from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage


logger = logging.getLogger("hjbfit.runner")


class SetupStage(BaseStage):
    name = "setup"
    requires = ("config",)

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        setup = build_setup(context["config"])
        context["setup"] = setup
        if callback:
            callback(f"Built {setup.problem.name} on a {setup.mesh.n_intervals} mesh ({setup.mesh.size} unknowns)")
        violations = validate(setup.problem, setup.mesh)
        context["violations"] = violations
        log_stage(context, self.name, f"problem={setup.problem.name} mesh={setup.mesh.describe()} violations={len(violations)}")
        logger.info("setup: %s, %d unknowns, %d hypothesis violations", setup.problem.name, setup.mesh.size, len(violations))
        return context
