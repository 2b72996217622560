import json
import threading
from typing import Any, Dict, Optional

import numpy as np
import redis

from xylab.core.config import settings
from xylab.core.logging import logger
from xylab.models.geometry import FiberGrid
from xylab.models.potential import Potential
from xylab.models.results import EigenSystem
from xylab.services import transfer


class RedisCache:
    """Redis caching service"""

    def __init__(self, enabled: Optional[bool] = None, url: Optional[str] = None):
        self.enabled = settings.REDIS_ENABLED if enabled is None else enabled
        self.client: Optional[redis.Redis] = None

        if self.enabled:
            self.client = redis.Redis.from_url(
                url or settings.REDIS_URL,
                decode_responses=True
            )

    def get(self, key: str) -> Optional[Any]:
        """Get value from cache"""
        if not self.enabled or not self.client:
            return None

        try:
            value = self.client.get(key)
            if value:
                return json.loads(value)
        except (redis.RedisError, ValueError) as exc:
            logger.warning(f"cache read failed for {key}: {exc}")
        return None

    def set(self, key: str, value: Any, ttl: Optional[int] = None) -> bool:
        """Set value to cache with TTL"""
        if not self.enabled or not self.client:
            return False

        try:
            self.client.setex(key, ttl or settings.CACHE_TTL, json.dumps(value))
            return True
        except redis.RedisError as exc:
            logger.warning(f"cache write failed for {key}: {exc}")
            return False

    def invalidate_pattern(self, pattern: str) -> int:
        """Delete all keys matching pattern"""
        if not self.enabled or not self.client:
            return 0

        try:
            keys = self.client.keys(pattern)
            if keys:
                return self.client.delete(*keys)
        except redis.RedisError as exc:
            logger.warning(f"cache invalidation failed for {pattern}: {exc}")
        return 0

    def close(self):
        """Close connection"""
        if self.client:
            self.client.close()
            logger.info("Redis connection closed")


class CacheKeys:
    EIGEN = "xylab:eigen:{potential}:{n_nodes}:{c!r}:{tol!r}"
    ALL = "xylab:*"


class EigenCache:
    """Converged eigensystems keyed by potential, grid and c; memory first, Redis second.

    Redis stores only (log β, log h, log ν); kernels are rebuilt on load.
    """

    def __init__(self, backend: Optional[RedisCache] = None):
        self.backend = backend if backend is not None else RedisCache()
        self._memory: Dict[str, EigenSystem] = {}
        self._lock = threading.Lock()

    def key(self, pot: Potential, c: float, grid: FiberGrid, tol: float) -> str:
        return CacheKeys.EIGEN.format(potential=pot.key, n_nodes=grid.n_nodes, c=float(c), tol=float(tol))

    def get_or_compute(
        self,
        pot: Potential,
        c: float,
        grid: FiberGrid,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> EigenSystem:
        tol = tol or settings.EIGEN_TOL
        key = self.key(pot, c, grid, tol)
        with self._lock:
            hit = self._memory.get(key)
        if hit is not None:
            return hit

        kernel = transfer.build_kernel(pot, c, grid)
        stored = self.backend.get(key)
        if stored is not None:
            logger.info(f"eigensystem cache hit {key}")
            es = transfer.assemble_eigensystem(
                kernel,
                stored["log_beta_c"],
                np.asarray(stored["log_h"]),
                np.asarray(stored["log_nu"]),
                stored.get("iterations", 0),
            )
        else:
            es = transfer.leading_eigensystem(kernel, tol, max_iter)
            self.backend.set(key, {
                "log_beta_c": es.log_beta_c,
                "log_h": es.log_h.tolist(),
                "log_nu": es.log_nu.tolist(),
                "iterations": es.iterations,
            })
        with self._lock:
            self._memory[key] = es
        return es

    def clear(self) -> None:
        with self._lock:
            self._memory.clear()
        self.backend.invalidate_pattern(CacheKeys.ALL)

    def close(self) -> None:
        self.backend.close()


# Singleton
eigen_cache = EigenCache()
