import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator


@dataclass
class Span:
    seconds: float = 0.0


class WallClock:
    """Monotonic wall-clock timings."""

    @contextmanager
    def measure(self, units: int = 1) -> Iterator[Span]:
        span = Span()
        start = time.perf_counter()
        try:
            yield span
        finally:
            span.seconds = time.perf_counter() - start


class StepClock:
    """
    Synthetic timings: every measured span costs ``units * step`` seconds.

    Runs timed with a step clock produce identical traces for identical work.
    """

    def __init__(self, step: float = 1e-3):
        if step < 0:
            raise ValueError("step must be non-negative")
        self.step = step
        self.ticks = 0

    @contextmanager
    def measure(self, units: int = 1) -> Iterator[Span]:
        span = Span()
        try:
            yield span
        finally:
            self.ticks += units
            span.seconds = units * self.step
