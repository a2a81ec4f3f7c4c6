import logging
from typing import Any, Dict

from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage
from solver.audit import mmatrix_audit


logger = logging.getLogger("hjbfit.runner")


class AuditStage(BaseStage):
    name = "audit"
    requires = ("setup",)

    def enabled(self, context: Dict[str, Any]) -> bool:
        return context.get("mode") == "audit" or context["config"].output.mmatrix_audit

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        config = context["config"]
        setup = context["setup"]
        results = []
        for scheme in config.solver.schemes:
            if callback:
                callback(f"Auditing {scheme} operators over {len(setup.problem.controls)} control samples")
            results.append(mmatrix_audit(scheme, setup.problem, setup.mesh, config.time.theta, config.time.steps))
        context["audit"] = results
        context["audit_passed"] = all(r.passed for r in results)
        log_stage(context, self.name, "; ".join(r.summary_lines(max_listed=0)[0] for r in results))
        return context
