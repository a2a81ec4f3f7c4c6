from .audit_stage import AuditStage
from .export_stage import ExportStage
from .metrics_stage import MetricsStage
from .setup_stage import SetupStage
from .solve_stage import SolveStage

__all__ = ["SetupStage", "SolveStage", "MetricsStage", "AuditStage", "ExportStage"]
