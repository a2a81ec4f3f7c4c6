import logging
from dataclasses import asdict
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

load_dotenv()

from problems.problem import validate
from runner.config import ConfigError, build_setup, parse_config
from runner.orchestrator import run_experiment
from solver.stepper import SolverError
from utils.cache import RUN_CACHE, CacheManager
from utils.config import get_log_level, get_run_cache_ttl_minutes

# Logging configuration
logging.basicConfig(
    level=getattr(logging, get_log_level(), logging.INFO),
    format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
)
logger = logging.getLogger("hjbfit.api")

app = FastAPI(title="hjbfit: fitted finite volume HJB solver")

origins = [
    "http://localhost:3000",
    "http://127.0.0.1:3000",
]
app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

run_cache = CacheManager()


class ValidateRequest(BaseModel):
    problem: str = "merton"
    preset: Optional[str] = None
    samples: Optional[int] = Field(default=None, ge=1)


def _now_ts() -> str:
    return datetime.now(timezone.utc).isoformat()


@app.exception_handler(ConfigError)
async def config_error_handler(request: Request, exc: ConfigError) -> JSONResponse:
    return JSONResponse(status_code=422, content={"ok": False, "detail": str(exc)})


@app.exception_handler(SolverError)
async def solver_error_handler(request: Request, exc: SolverError) -> JSONResponse:
    logger.error("solver failure on %s: %s", request.url.path, exc)
    return JSONResponse(status_code=500, content={"ok": False, "detail": str(exc)})


@app.get("/health")
def health() -> Any:
    return {"status": "ok"}


@app.get("/api/health")
def api_health() -> Any:
    return {"status": "ok", "cached_runs": len(run_cache), "cache": run_cache.stats(), "timestamp": _now_ts()}


@app.post("/api/validate")
def api_validate(payload: ValidateRequest) -> Any:
    problem: Dict[str, Any] = {"name": payload.problem}
    if payload.preset is not None:
        problem["preset"] = payload.preset
    if payload.samples is not None:
        problem["samples"] = payload.samples
    config = parse_config({"problem": problem}, source="request")
    setup = build_setup(config)
    violations = validate(setup.problem, setup.mesh)
    return {
        "ok": True,
        "problem": setup.problem.name,
        "mesh": setup.mesh.describe(),
        "violations": [asdict(v) for v in violations],
    }


def _serialize(context: Dict[str, Any]) -> Dict[str, Any]:
    records = []
    for rec in context.get("records") or []:
        row = asdict(rec)
        row["intervals"] = list(rec.intervals)
        records.append(row)
    return {
        "records": records,
        "orders": context.get("orders", {}),
        "reference_orders": context.get("reference_orders", {}),
        "time_orders": context.get("time_orders", {}),
        "time_errors": {s: {str(m): e for m, e in t.items()} for s, t in (context.get("time_errors") or {}).items()},
        "audit": [line for r in context.get("audit") or [] for line in r.summary_lines()],
        "audit_passed": context.get("audit_passed"),
        "debug_logs": context.get("debug_logs", []),
    }


@app.post("/api/run")
def api_run(payload: Dict[str, Any]) -> Any:
    config = parse_config(payload, source="request")
    cache_key = run_cache.generate_key(config.canonical())
    cached = run_cache.get(cache_key, cache_type=RUN_CACHE)
    if cached:
        return {"ok": True, "data": {**cached, "cached": True}}

    context = run_experiment(config, write=False)
    if context["errors"]:
        # first stage failure decides the status code
        first = context["errors"][0]
        if isinstance(first["error"], (ConfigError, SolverError)):
            raise first["error"]
        raise SolverError(f"{first['stage']} failed: {first['error']}")
    result = _serialize(context)
    run_cache.set(cache_key, result, ttl_minutes=get_run_cache_ttl_minutes(), cache_type=RUN_CACHE)
    return {"ok": True, "data": {**result, "cached": False}}
