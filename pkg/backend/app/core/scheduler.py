import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from app.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ReplicationScheduler:
    """Runs independent jobs (replications, resamples) on a process pool.

    Results always come back in submission order, so downstream aggregation
    does not depend on which worker finished first. With a single worker the
    jobs run inline in the calling process.
    """

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers if max_workers is not None else settings.MAX_WORKERS
        if self.max_workers < 1:
            raise ValueError("max_workers must be at least 1")

    def map(self, job: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if not items:
            return []

        if self.max_workers == 1 or len(items) == 1:
            logger.info(f"Running {len(items)} jobs inline")
            return [job(item) for item in items]

        workers = min(self.max_workers, len(items))
        logger.info(f"Running {len(items)} jobs on {workers} worker processes")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(job, items))
