from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class DeterministicScheduler:
    """Runs actors one after another in the given order on the calling thread."""

    def map(self, fn: Callable[[T], R], actors: Sequence[T]) -> List[R]:
        return [fn(actor) for actor in actors]

    def close(self):
        pass


class ConcurrentScheduler:
    """Runs actors on a thread pool; results come back in input order."""

    def __init__(self, max_workers: Optional[int] = None):
        self._executor = ThreadPoolExecutor(
            max_workers=max_workers, thread_name_prefix="fslsim-actor"
        )

    def map(self, fn: Callable[[T], R], actors: Sequence[T]) -> List[R]:
        return list(self._executor.map(fn, actors))

    def close(self):
        self._executor.shutdown(wait=True)


def make_scheduler(mode: str, n_workers: Optional[int] = None):
    if mode == "deterministic":
        return DeterministicScheduler()
    if mode == "concurrent":
        return ConcurrentScheduler(n_workers)
    raise ValueError("unknown scheduler mode '{}'".format(mode))
