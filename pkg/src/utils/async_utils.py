"""
Async Utilities Module
Fans independent computations (loops, words, grid nodes) out to a thread pool.
"""

import logging
from typing import Callable, Iterable, List, Optional, TypeVar
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class TaskPool:
    """
    Shared executor for independent work items.
    Results always come back in input order, so payloads do not depend on
    the number of workers.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._initialized = True
        self._executor: Optional[ThreadPoolExecutor] = None
        self._max_workers = 0

    def _get_executor(self, max_workers: int) -> ThreadPoolExecutor:
        if self._executor is None or self._max_workers != max_workers:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
            self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="relmon")
            self._max_workers = max_workers
            logger.debug(f"Task pool started with {max_workers} workers")
        return self._executor

    def map_ordered(self, func: Callable[[T], R], items: Iterable[T], max_workers: int) -> List[R]:
        """
        Apply func to every item concurrently.

        Args:
            func: Function of one item.
            items: Work items.
            max_workers: Pool size.

        Returns:
            List of results in the order of items. The first exception raised
            by any item is re-raised.
        """
        items = list(items)
        executor = self._get_executor(max(1, int(max_workers)))
        futures = [executor.submit(func, item) for item in items]
        return [future.result() for future in futures]

    def shutdown(self):
        """Shutdown the executor."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
            logger.debug("Task pool shutdown")


# Global instance
task_pool = TaskPool()


def parallel_map(func: Callable[[T], R], items: Iterable[T],
                 max_workers: Optional[int] = None, enabled: Optional[bool] = None) -> List[R]:
    """
    Map func over items, in parallel when allowed by the settings.

    Runs sequentially when parallel processing is disabled, when only one
    worker is configured, or when there is at most one item.
    """
    from ..config import config

    items = list(items)
    if max_workers is None:
        max_workers = config.app.max_threads
    if enabled is None:
        enabled = config.app.parallel_processing
    if not enabled or max_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return task_pool.map_ordered(func, items, max_workers)
