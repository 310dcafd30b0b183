"""Middleware package."""

from .cache import (
    SystemCache,
    get_cache,
    cache_key_builder,
    cached_system,
)

__all__ = [
    "SystemCache",
    "get_cache",
    "cache_key_builder",
    "cached_system",
]
