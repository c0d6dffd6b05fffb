from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable
import logging

from utils.env_utils import get_env_vars

logger = logging.getLogger("insulation_lab")


class PoolSingleton:
    """Process-wide worker pool for grid sweeps."""

    _instance = None
    _pool = None
    _workers = 0

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(PoolSingleton, cls).__new__(cls)
            cls._workers = get_env_vars()["INSULATION_LAB_THREADS"]
            cls._pool = ThreadPoolExecutor(max_workers=cls._workers, thread_name_prefix="insulation-lab")
            logger.info(f"Worker pool initialized with {cls._workers} threads")
        return cls._instance

    @property
    def workers(self) -> int:
        return self._workers

    def map_ordered(self, fn: Callable, items: Iterable) -> list:
        """Apply fn to every item in parallel; results keep the input order."""
        items = list(items)
        if self._workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    @classmethod
    def shutdown(cls):
        if cls._pool is not None:
            cls._pool.shutdown(wait=True)
        cls._instance = None
        cls._pool = None
