from datetime import datetime, timezone
from typing import Any, Callable, Dict, Optional, Tuple


ProgressCallback = Optional[Callable[[str], None]]


def log_stage(context: Dict[str, Any], stage: str, message: str) -> None:
    context.setdefault("debug_logs", []).append({
        "ts": datetime.now(timezone.utc).isoformat(),
        "stage": stage,
        "message": message,
    })


class BaseStage:
    name = "stage"
    # context keys that must be present, otherwise the stage is skipped
    requires: Tuple[str, ...] = ()

    def enabled(self, context: Dict[str, Any]) -> bool:
        return True

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        raise NotImplementedError("Subclasses must implement execute()")
