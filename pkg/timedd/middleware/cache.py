"""
In-memory cache for assembled systems.

Assembly and the direct reference solve dominate the setup time of an
experiment; both depend only on the problem and the grid, so they are
shared across the K list and across table cells.
"""
import hashlib
from functools import wraps
from typing import Any, Optional

from cachetools import LRUCache

from timedd.config import settings
from timedd.logging_config import logger


class SystemCache:
    """LRU cache keyed by an md5 digest of the problem and grid parameters."""

    def __init__(self, maxsize: Optional[int] = None):
        """Initialize cache."""
        self._cache: LRUCache = LRUCache(maxsize=maxsize or settings.SYSTEM_CACHE_SIZE)
        self.hits = 0
        self.misses = 0

    def get(self, key: str) -> Optional[Any]:
        """Get value from cache."""
        value = self._cache.get(key)
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def set(self, key: str, value: Any) -> None:
        """Set value in cache."""
        self._cache[key] = value

    def delete(self, key: str) -> None:
        """Delete value from cache."""
        if key in self._cache:
            del self._cache[key]

    def clear(self) -> None:
        """Clear all cache entries."""
        self._cache.clear()
        self.hits = self.misses = 0

    def __len__(self) -> int:
        return len(self._cache)


# Global cache instance
_cache = SystemCache()


def get_cache() -> SystemCache:
    """Get cache instance."""
    return _cache


def cache_key_builder(namespace: str, *args: Any, **kwargs: Any) -> str:
    """
    Build cache key from a namespace and call arguments.

    Floats are rendered with repr so that gamma = 1e-4 and 1e-06 never collide.
    """
    key_parts = [namespace, *(repr(a) for a in args), *(f"{k}={v!r}" for k, v in sorted(kwargs.items()))]
    key_string = ":".join(key_parts)
    return f"timedd:{hashlib.md5(key_string.encode()).hexdigest()}"


def cached_system(func):
    """
    Decorator caching a function of hashable problem/grid parameters.

    The wrapped function gains a ``use_cache`` keyword (default True).
    """

    @wraps(func)
    def wrapper(*args, use_cache: bool = True, **kwargs):
        if not use_cache:
            return func(*args, **kwargs)
        key = cache_key_builder(func.__qualname__, *args, **kwargs)
        cached = _cache.get(key)
        if cached is not None:
            logger.debug("system cache HIT %s", func.__qualname__)
            return cached
        logger.debug("system cache MISS %s", func.__qualname__)
        result = func(*args, **kwargs)
        _cache.set(key, result)
        return result

    return wrapper
