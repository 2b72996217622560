from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="XYLAB_", env_file=".env", extra="ignore")

    # Logging
    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"

    # Shift-space metric
    THETA: float = 0.5

    # Transfer operator
    EIGEN_TOL: float = 1e-12
    EIGEN_MAX_ITER: int = 100_000
    MAX_ARITY: int = 3
    MAX_CYLINDER_DEPTH: int = 8

    # Max-plus solver
    MAXPLUS_TOL: float = 1e-12
    MAXPLUS_MAX_SWEEPS: int = 200_000
    MAXPLUS_DAMPING: float = 0.5
    TIE_TOL: float = 1e-9
    ORBIT_SEARCH_LIMIT: int = 10_000_000

    # Zero temperature
    SELECTION_GAP: float = 0.05

    # Large deviations
    RATE_CAP: float = 50.0
    RATE_TERMS: int = 100
    DIAGONAL_DIVISOR: float = 5.0

    # Eigensystem cache
    REDIS_ENABLED: bool = False
    REDIS_URL: str = "redis://localhost:6379/0"
    CACHE_TTL: int = 3600


settings = Settings()
