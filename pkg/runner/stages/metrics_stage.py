import logging
from typing import Any, Dict, List

from runner.stages.base_stage import BaseStage, ProgressCallback, log_stage
from solver.metrics import ErrorRecord, fit_temporal_order, l2_reference_error, l2_spacetime_error, order_from_pairs


logger = logging.getLogger("hjbfit.runner")


class MetricsStage(BaseStage):
    name = "metrics"
    requires = ("setup", "runs")

    def execute(self, context: Dict[str, Any], callback: ProgressCallback = None) -> Dict[str, Any]:
        config = context["config"]
        setup = context["setup"]
        records: List[ErrorRecord] = []
        for run in context["runs"]:
            trajectory = run["trajectory"]
            err = l2_spacetime_error(trajectory, setup.exact, setup.mesh, trajectory.dt)
            records.append(
                ErrorRecord(
                    scheme=run["scheme"],
                    intervals=setup.mesh.n_intervals,
                    steps=run["steps"],
                    theta=config.time.theta,
                    l2_error=err,
                    max_policy_iters=trajectory.max_policy_iterations,
                    wall_ms=run["wall_ms"],
                )
            )
            logger.info("%s m=%d: L2 error %.6e", run["scheme"], run["steps"], err)
        context["records"] = records

        orders: Dict[str, float] = {}
        if len(set(config.time.steps)) >= 2:
            for scheme in config.solver.schemes:
                orders[scheme] = fit_temporal_order([r for r in records if r.scheme == scheme])
        context["orders"] = orders

        reference_orders: Dict[str, float] = {}
        for scheme, table in setup.reference_errors.items():
            reference_orders[scheme] = order_from_pairs(list(table), list(table.values()))
        context["reference_orders"] = reference_orders

        time_errors: Dict[str, Dict[int, float]] = {}
        time_orders: Dict[str, float] = {}
        for scheme, reference in (context.get("references") or {}).items():
            table = {
                run["steps"]: l2_reference_error(run["trajectory"], reference)
                for run in context["runs"]
                if run["scheme"] == scheme
            }
            time_errors[scheme] = table
            if len(table) >= 2 and all(err > 0.0 for err in table.values()):
                time_orders[scheme] = order_from_pairs(list(table), list(table.values()))
            logger.info("%s time-only errors against m=%d: %s", scheme, reference.config.steps, table)
        context["time_errors"] = time_errors
        context["time_orders"] = time_orders

        log_stage(context, self.name, f"records={len(records)} orders={orders} time_orders={time_orders}")
        return context
