import logging
from typing import Any, Dict, List, Optional

from runner.config import RunConfig
from runner.stages import AuditStage, ExportStage, MetricsStage, SetupStage, SolveStage
from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage


logger = logging.getLogger("hjbfit.runner")

MODES = ("run", "convergence", "audit")


class RunOrchestrator:
    def __init__(self, stages: Optional[List[BaseStage]] = None) -> None:
        self.pipeline: List[BaseStage] = stages if stages is not None else [
            SetupStage(),
            SolveStage(),
            MetricsStage(),
            AuditStage(),
            ExportStage(),
        ]

    def run(
        self,
        config: RunConfig,
        mode: str = "run",
        write: bool = True,
        callback: ProgressCallback = None,
    ) -> Dict[str, Any]:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
        context: Dict[str, Any] = {"config": config, "mode": mode, "write": write, "errors": [], "debug_logs": []}
        for stage in self.pipeline:
            missing = [key for key in stage.requires if key not in context]
            if missing:
                log_stage(context, stage.name, f"skipped, missing {missing}")
                continue
            if not stage.enabled(context):
                continue
            try:
                context = stage.execute(context, callback)
            except Exception as exc:  # noqa: BLE001
                # later stages that need this stage's output skip themselves
                context["errors"].append({"stage": stage.name, "error": exc})
                log_stage(context, stage.name, f"failed: {type(exc).__name__}: {exc}")
                logger.error("%s stage failed: %s", stage.name, exc)
                if callback:
                    callback(f"{stage.name} failed: {exc}")
        return context


def run_experiment(config: RunConfig, mode: str = "run", write: bool = True, callback: ProgressCallback = None) -> Dict[str, Any]:
    return RunOrchestrator().run(config, mode=mode, write=write, callback=callback)
