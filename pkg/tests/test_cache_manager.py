import pytest

from utils.cache import OPERATOR_CACHE, RUN_CACHE, CacheManager


def test_cache_basic_set_get_invalidate():
    c = CacheManager(max_entries=2)
    c.set("fitted|a|1.0", 1)
    c.set("fdm|a|1.0", 2)
    assert c.get("fitted|a|1.0") == 1
    assert c.get("fdm|a|1.0") == 2
    removed = c.invalidate(pattern="^fitted")
    assert removed == 1
    assert c.get("fitted|a|1.0") is None
    assert c.hits == 2 and c.misses == 1


def test_cache_lru_eviction():
    c = CacheManager(max_entries=2)
    c.set("a", 1)
    c.set("b", 2)
    # touch 'a' so 'b' is least recent
    assert c.get("a") == 1
    c.set("c", 3)
    assert c.get("b") is None
    assert c.get("a") == 1 and c.get("c") == 3


def test_expired_entries_are_dropped(monkeypatch):
    c = CacheManager(max_entries=4)
    clock = [100.0]
    monkeypatch.setattr(c, "_now", lambda: clock[0])
    c.set("run", {"ok": True}, ttl_minutes=1, cache_type=RUN_CACHE)
    c.set("op", "stencil")
    clock[0] += 61.0
    assert c.get("run", cache_type=RUN_CACHE) is None
    assert c.get("op") == "stencil"


def test_cache_types_are_separate():
    c = CacheManager(max_entries=1)
    c.set("k", "operator")
    c.set("k", "run", cache_type=RUN_CACHE)
    assert c.get("k", cache_type=OPERATOR_CACHE) == "operator"
    assert c.get("k", cache_type=RUN_CACHE) == "run"
    assert len(c) == 2
    c.clear_cache(RUN_CACHE)
    assert len(c) == 1
    assert c.invalidate() == 1
    assert len(c) == 0


def test_key_generation():
    a = CacheManager.generate_key({"time": {"steps": [10, 20], "theta": 1.0}, "problem": {"name": "smoke"}})
    b = CacheManager.generate_key({"problem": {"name": "smoke"}, "time": {"theta": 1.0, "steps": [10, 20]}})
    c = CacheManager.generate_key({"problem": {"name": "smoke"}, "time": {"theta": 0.5, "steps": [10, 20]}})
    assert a == b and a != c
    assert CacheManager.operator_key("fitted", 0.3, "merton3d") != CacheManager.operator_key("fitted", 0.1 + 0.2, "merton3d")
    assert CacheManager.operator_key("fdm", 0.5, "smoke") == "fdm|smoke|0.5"


def test_default_size_from_env(monkeypatch):
    monkeypatch.setenv("OPERATOR_CACHE_SIZE", "3")
    assert CacheManager().max_entries == 3


def test_stats_and_size_check():
    c = CacheManager(max_entries=2)
    c.set("a", 1)
    c.get("a")
    c.get("b")
    assert c.stats() == {"hits": 1, "misses": 1, "entries": {OPERATOR_CACHE: 1}}
    with pytest.raises(ValueError):
        CacheManager(max_entries=0)
