"""
Configuration settings for the time-domain-decomposition solver.
"""
from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """Application settings."""

    # Application
    APP_NAME: str = "timedd"
    APP_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Parallelism of additive sweeps (number of worker threads)
    TIMEDD_THREADS: int = 1

    # Output
    OUTPUT_DIR: str = "results"

    # Assembled-system cache
    SYSTEM_CACHE_SIZE: int = 8

    # Sparse direct solver
    PIVOT_THRESHOLD: float = 1e-14  # relative to max |a_ij|

    # Outer iterations
    STOP_RTOL: float = 1e-7
    GMRES_MAX_ITERS: int = 500
    SCHWARZ_MAX_ITERS: int = 500

    # Coarse solve (ILU(0)-BiCGStab)
    COARSE_RTOL: float = 1e-4
    COARSE_MAX_ITERS: int = 200

    # Subdomain solve when iterative (2D)
    SUBDOMAIN_RTOL: float = 1e-8
    SUBDOMAIN_MAX_ITERS: int = 500

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Export settings
settings = get_settings()
