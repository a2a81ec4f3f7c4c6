import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from discretization.export import write_operator_csv, write_policy_csv
from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage
from solver.metrics import write_errors_csv
from solver.stepper import resolve_assembler


logger = logging.getLogger("hjbfit.runner")


class ExportStage(BaseStage):
    name = "export"
    requires = ("setup",)

    def enabled(self, context: Dict[str, Any]) -> bool:
        return context.get("write", True)

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        config = context["config"]
        setup = context["setup"]
        out = Path(config.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        written: List[Path] = []

        if context.get("records"):
            written.append(write_errors_csv(context["records"], out / "errors.csv"))
        if context.get("orders") or context.get("time_orders"):
            written.append(self._write_orders(context, out / "order.txt"))
        if context.get("audit"):
            path = out / "mmatrix_audit.txt"
            lines: List[str] = []
            for result in context["audit"]:
                lines.extend(result.summary_lines())
            path.write_text("\n".join(lines) + "\n")
            written.append(path)

        if config.output.dump_operator:
            alpha = config.output.operator_alpha
            alpha = setup.problem.controls.hi if alpha is None else alpha
            for scheme in config.solver.schemes:
                assemble = resolve_assembler(scheme)
                op = assemble(setup.problem, setup.mesh, setup.problem.horizon, np.full(setup.mesh.size, alpha)).to_operator()
                written.extend(write_operator_csv(op, out / f"operator_{scheme}.csv", out / f"operator_{scheme}_F.csv"))

        if config.output.dump_policy:
            for run in context.get("runs", []):
                path = out / f"policy_{run['scheme']}_m{run['steps']}.csv"
                written.append(write_policy_csv(setup.mesh, run["trajectory"].final_alpha, path))

        context["artifacts"] = [str(p) for p in written]
        for p in written:
            logger.info("wrote %s", p)
        if callback:
            callback(f"Wrote {len(written)} files to {out}")
        log_stage(context, self.name, f"artifacts={len(written)}")
        return context

    @staticmethod
    def _write_orders(context: Dict[str, Any], path: Path) -> Path:
        lines = []
        for scheme, slope in (context.get("orders") or {}).items():
            line = f"{scheme}: temporal order {slope:.6f}"
            ref = context.get("reference_orders", {}).get(scheme)
            if ref is not None:
                line += f" (published table fits {ref:.6f})"
            lines.append(line)
        ref_steps = context["config"].time.reference_steps
        for scheme, slope in (context.get("time_orders") or {}).items():
            errors = ", ".join(f"m={m}: {err:.6e}" for m, err in context["time_errors"][scheme].items())
            lines.append(f"{scheme}: time-only order {slope:.6f} against m={ref_steps} ({errors})")
        path.write_text("\n".join(lines) + "\n")
        return path
