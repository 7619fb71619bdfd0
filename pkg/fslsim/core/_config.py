from dataclasses import asdict, dataclass
from typing import Optional


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization settings shared by the split actors and the baseline trainer.

    Parameters
    ----------
    eta_c
        Client learning rate for ``f_c``.
    eta_s
        Server learning rate for ``f_s``.
    batch_size
        Samples per client batch.
    epochs
        Global epochs; one epoch is ``ceil(max |D_i| / batch_size)`` rounds.
    aggregation_every
        Aggregate every this many rounds; ``None`` aggregates once per epoch.
    seed
        Seed for batch order and initialization.
    """

    eta_c: float = 0.05
    eta_s: float = 0.05
    batch_size: int = 32
    epochs: int = 20
    aggregation_every: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not self.eta_c > 0 or not self.eta_s > 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.aggregation_every is not None and self.aggregation_every < 1:
            raise ValueError("aggregation_every must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)
