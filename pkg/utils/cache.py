import hashlib
import json
import logging
import re
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, Optional

from utils.config import get_operator_cache_size


logger = logging.getLogger("hjbfit.cache")


OPERATOR_CACHE = "operator"
RUN_CACHE = "run"


@dataclass
class CacheEntry:
    value: Any
    expires_at: Optional[float]  # monotonic deadline; None keeps the entry until evicted

    def expired(self, now: float) -> bool:
        return self.expires_at is not None and self.expires_at <= now


def _key_matcher(pattern: str) -> Callable[[str], bool]:
    try:
        regex = re.compile(pattern)
    except re.error:
        return lambda key: pattern in key
    return lambda key: regex.search(key) is not None


class CacheManager:
    """Named in-memory caches with LRU eviction and optional expiry.

    The stepper keeps control-batched stencils in the operator cache; the API
    keeps finished run results in the run cache under a config hash.
    """

    def __init__(self, max_entries: Optional[int] = None) -> None:
        self.max_entries = max_entries if max_entries is not None else get_operator_cache_size()
        if self.max_entries < 1:
            raise ValueError(f"cache needs room for at least one entry, got {self.max_entries}")
        self._caches: Dict[str, "OrderedDict[str, CacheEntry]"] = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def generate_key(payload: Any) -> str:
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=repr)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def operator_key(scheme: str, tau: float, tag: str = "") -> str:
        # repr keeps every bit of tau so neighbouring levels never collide
        return f"{scheme}|{tag}|{tau!r}"

    def _now(self) -> float:
        return time.monotonic()

    def _bucket(self, cache_type: str) -> "OrderedDict[str, CacheEntry]":
        return self._caches.setdefault(cache_type, OrderedDict())

    def _targets(self, cache_type: Optional[str]) -> Iterable[str]:
        return [cache_type] if cache_type else list(self._caches)

    def _drop_expired(self, cache_type: str) -> None:
        bucket = self._bucket(cache_type)
        now = self._now()
        for key in [k for k, entry in bucket.items() if entry.expired(now)]:
            del bucket[key]

    def get(self, key: str, cache_type: str = OPERATOR_CACHE) -> Any:
        self._drop_expired(cache_type)
        bucket = self._bucket(cache_type)
        if key not in bucket:
            self.misses += 1
            return None
        self.hits += 1
        bucket.move_to_end(key)
        return bucket[key].value

    def set(self, key: str, value: Any, ttl_minutes: Optional[float] = None, cache_type: str = OPERATOR_CACHE) -> None:
        self._drop_expired(cache_type)
        bucket = self._bucket(cache_type)
        deadline = None if ttl_minutes is None else self._now() + 60.0 * ttl_minutes
        bucket[key] = CacheEntry(value=value, expires_at=deadline)
        bucket.move_to_end(key)
        while len(bucket) > self.max_entries:
            evicted, _ = bucket.popitem(last=False)
            logger.debug("evicted %s from %s cache", evicted, cache_type)

    def invalidate(self, pattern: Optional[str] = None, cache_type: Optional[str] = None) -> int:
        """Drop keys matching a regex (or substring if the regex is invalid); all keys when pattern is None."""
        matches = (lambda key: True) if pattern is None else _key_matcher(pattern)
        removed = 0
        for ctype in self._targets(cache_type):
            bucket = self._bucket(ctype)
            for key in [k for k in bucket if matches(k)]:
                del bucket[key]
                removed += 1
        if removed:
            logger.debug("invalidated %d entries (pattern=%r, cache=%s)", removed, pattern, cache_type or "all")
        return removed

    def clear_cache(self, cache_type: str) -> None:
        self._caches[cache_type] = OrderedDict()

    def stats(self) -> Dict[str, Any]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "entries": {ctype: len(bucket) for ctype, bucket in self._caches.items()},
        }

    def __len__(self) -> int:
        return sum(len(bucket) for bucket in self._caches.values())
