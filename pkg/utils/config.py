import os


_TRUE = {"1", "true", "yes", "on"}


def _float(name: str, default: str) -> float:
    raw = os.getenv(name, default).strip()
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"environment variable {name}={raw!r} is not a number") from None


def _int(name: str, default: str) -> int:
    raw = os.getenv(name, default).strip()
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"environment variable {name}={raw!r} is not an integer") from None


def get_log_level() -> str:
    return os.getenv("LOG_LEVEL", "INFO").strip().upper()


def get_output_dir() -> str:
    return os.getenv("HJBFIT_OUTPUT_DIR", "out").strip() or "out"


def get_control_samples() -> int:
    return _int("CONTROL_SAMPLES", "101")


def get_policy_tolerance() -> float:
    return _float("POLICY_TOLERANCE", "1e-8")


def get_max_policy_iterations() -> int:
    return _int("MAX_POLICY_ITERATIONS", "50")


def get_linear_tolerance() -> float:
    return _float("LINEAR_TOLERANCE", "1e-10")


def get_operator_cache_size() -> int:
    return _int("OPERATOR_CACHE_SIZE", "512")


def get_run_cache_ttl_minutes() -> float:
    return _float("RUN_CACHE_TTL_MINUTES", "30")


def is_enabled(flag: str) -> bool:
    key = f"ENABLE_{flag.upper()}"
    val = os.getenv(key, "false").strip().lower()
    return val in _TRUE
