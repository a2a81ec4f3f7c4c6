import logging
import os
from pathlib import Path
from typing import Any, Dict, List

from dotenv import load_dotenv

from runner.config import preset_config, with_overrides
from runner.orchestrator import run_experiment
from utils.config import get_output_dir


DEFAULT_TABLES: List[str] = ["table1", "table2"]
# divisible by every m of the table sweeps
REFERENCE_STEPS = 1200


def reproduce_table(name: str, out_dir: Path) -> Dict[str, Any]:
    overrides = {"output": {"directory": str(out_dir / name)}, "time": {"reference_steps": REFERENCE_STEPS}}
    config = with_overrides(preset_config(name), overrides)
    context = run_experiment(config, mode="convergence")
    for entry in context["errors"]:
        logging.warning("%s: %s stage failed: %s", name, entry["stage"], entry["error"])
    return context


def summary_lines(name: str, context: Dict[str, Any]) -> List[str]:
    setup = context.get("setup")
    reference = setup.reference_errors if setup is not None else {}
    lines = [f"## {name}", "", "| scheme | m | L2 error | published | max policy iters |", "|---|---|---|---|---|"]
    for rec in context.get("records") or []:
        published = reference.get(rec.scheme, {}).get(rec.steps)
        shown = f"{published:.3e}" if published is not None else "-"
        lines.append(f"| {rec.scheme} | {rec.steps} | {rec.l2_error:.3e} | {shown} | {rec.max_policy_iters} |")
    lines.append("")
    for scheme, slope in (context.get("orders") or {}).items():
        ref = (context.get("reference_orders") or {}).get(scheme)
        ref_text = f" (published table fits {ref:.3f})" if ref is not None else ""
        lines.append(f"- {scheme}: temporal order {slope:.3f}{ref_text}")
    for scheme, slope in (context.get("time_orders") or {}).items():
        lines.append(f"- {scheme}: time-only order {slope:.3f} against m={REFERENCE_STEPS}")
    lines.append("")
    return lines


def main() -> None:
    load_dotenv()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s [%(name)s] %(message)s")

    tables_env = os.getenv("REPRODUCE_TABLES")
    tables = [t.strip() for t in tables_env.split(",") if t.strip()] if tables_env else DEFAULT_TABLES
    out_dir = Path(get_output_dir())

    lines: List[str] = ["# Benchmark reproduction", ""]
    for name in tables:
        logging.info("Reproducing %s", name)
        context = reproduce_table(name, out_dir)
        lines.extend(summary_lines(name, context))

    out_dir.mkdir(parents=True, exist_ok=True)
    report = out_dir / "tables.md"
    report.write_text("\n".join(lines))
    logging.info("Saved report to %s", report)


if __name__ == "__main__":
    main()
