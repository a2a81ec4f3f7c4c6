import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from problems.problem import validate
from runner.config import PRESET_NAMES, ConfigError, RunConfig, build_setup, load_config, preset_config, with_overrides
from runner.orchestrator import run_experiment
from solver.stepper import SolverError
from utils.config import get_log_level


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_AUDIT = 3

console = Console()
logger = logging.getLogger("hjbfit.cli")


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, get_log_level(), logging.INFO),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjbfit", description="Fitted finite volume HJB solver experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=str, help="TOML run configuration")
        source.add_argument("--preset", choices=PRESET_NAMES, help="Built-in configuration")
        p.add_argument("--scheme", choices=["fitted", "fdm", "both"], default=None)
        p.add_argument("--steps", type=int, nargs="+", default=None, help="Time-step counts m")
        p.add_argument("--reference-steps", type=int, default=None, help="Finer m for time-only errors")
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--samples", type=int, default=None, help="Number of control samples")
        p.add_argument("--tolerance", type=float, default=None, help="Policy iteration tolerance")
        p.add_argument("--psi-sign", choices=["derived", "as-printed"], default=None)
        p.add_argument("--output", type=str, default=None, help="Output directory")
        p.add_argument("--dump-operator", action="store_true", default=None)
        p.add_argument("--dump-policy", action="store_true", default=None)
        p.add_argument("--mmatrix-audit", action="store_true", default=None)
        p.add_argument("--checkpoint", action="store_true", default=None)

    add_common(sub.add_parser("run", help="Solve and write errors.csv"))
    add_common(sub.add_parser("convergence", help="m-sweep with temporal order fit"))
    add_common(sub.add_parser("validate", help="Check the problem hypotheses on the mesh"))
    add_common(sub.add_parser("audit", help="M-matrix audit of operators and step matrices"))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else preset_config(args.preset)
    overrides: Dict[str, Dict[str, Any]] = {
        "problem": {"samples": args.samples, "psi_sign": args.psi_sign},
        "time": {"steps": args.steps, "theta": args.theta, "reference_steps": args.reference_steps},
        "solver": {"scheme": args.scheme, "tolerance": args.tolerance},
        "output": {
            "directory": args.output,
            "dump_operator": args.dump_operator,
            "dump_policy": args.dump_policy,
            "mmatrix_audit": args.mmatrix_audit,
            "checkpoint": args.checkpoint,
        },
    }
    return with_overrides(config, overrides)


def _print_records(context: Dict[str, Any]) -> None:
    records = context.get("records") or []
    if not records:
        return
    table = Table(title="L2 space-time errors")
    for column in ("scheme", "N", "m", "theta", "L2 error", "max policy iters", "wall ms"):
        table.add_column(column)
    for rec in records:
        table.add_row(
            rec.scheme,
            "x".join(str(n) for n in rec.intervals),
            str(rec.steps),
            f"{rec.theta:g}",
            f"{rec.l2_error:.4e}",
            str(rec.max_policy_iters),
            f"{rec.wall_ms:.1f}",
        )
    console.print(table)


def _print_context(context: Dict[str, Any]) -> None:
    _print_records(context)
    if context.get("orders"):
        lines = [f"{scheme}: {slope:.4f}" for scheme, slope in context["orders"].items()]
        for scheme, ref in context.get("reference_orders", {}).items():
            lines.append(f"{scheme} (published table): {ref:.4f}")
        for scheme, slope in context.get("time_orders", {}).items():
            lines.append(f"{scheme} (time-only, reference m={context['config'].time.reference_steps}): {slope:.4f}")
        console.print(Panel.fit("\n".join(lines), title="Temporal order", style="cyan"))
    for result in context.get("audit") or []:
        style = "green" if result.passed else "red"
        console.print(Panel.fit("\n".join(result.summary_lines()), title=f"M-matrix audit: {result.scheme}", style=style))
    for entry in context.get("debug_logs", []):
        console.print(f"[dim]{entry['stage']}[/dim] • {entry['message']}")


def exit_code(context: Dict[str, Any]) -> int:
    errors: List[Dict[str, Any]] = context.get("errors", [])
    if any(isinstance(e["error"], ConfigError) for e in errors):
        return EXIT_CONFIG
    if errors:
        return EXIT_SOLVER
    if context.get("audit_passed") is False:
        return EXIT_AUDIT
    return EXIT_OK


def _validate(config: RunConfig) -> int:
    setup = build_setup(config)
    violations = validate(setup.problem, setup.mesh)
    if not violations:
        console.print(Panel.fit(f"{setup.problem.name}: all hypotheses hold on {setup.mesh.size} nodes", style="green"))
        return EXIT_OK
    table = Table(title=f"{setup.problem.name}: hypothesis violations")
    for column in ("kind", "coefficient", "alpha", "probes", "worst", "at"):
        table.add_column(column)
    for v in violations:
        table.add_row(v.kind, v.coefficient, f"{v.alpha:g}", f"{v.count}/{v.probes}", f"{v.worst:.4g}", f"tau={v.tau:g} {v.point}")
    console.print(table)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    _configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = resolve_config(args)
        if args.command == "validate":
            return _validate(config)
        if args.command == "convergence" and len(set(config.time.steps)) < 2:
            raise ConfigError("convergence needs at least two distinct time-step counts")
    except ConfigError as exc:
        console.print(f"[red]configuration error:[/red] {exc}")
        return EXIT_CONFIG

    console.rule(f"[bold]hjbfit {args.command}")
    context = run_experiment(config, mode=args.command)
    _print_context(context)
    code = exit_code(context)
    if code == EXIT_SOLVER:
        for e in context["errors"]:
            kind = "solver failure" if isinstance(e["error"], SolverError) else "failure"
            console.print(f"[red]{kind} in {e['stage']}:[/red] {e['error']}")
    elif code == EXIT_CONFIG:
        console.print("[red]configuration error[/red]")
    return code


if __name__ == "__main__":
    sys.exit(main())
