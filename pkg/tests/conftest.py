import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: benchmark reproduction runs, enabled with RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.getenv("RUN_SLOW", "").strip().lower() in {"1", "true", "yes", "on"}:
        return
    skip_slow = pytest.mark.skip(reason="set RUN_SLOW=1 to run benchmark reproductions")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
