import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Mapping, Optional

from fslsim.core import ARCHITECTURES, TrainConfig

logger = logging.getLogger(__name__)

PARTITION_MODES = ("iid", "dirichlet")
SCHEDULER_MODES = ("deterministic", "concurrent")
DATASETS = ("synthetic", "mnist")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to reproduce one federated split learning run.

    Parameters
    ----------
    n_clients
        Number of client organizations.
    model
        Architecture name, see :data:`fslsim.core.ARCHITECTURES`.
    train
        Learning rates, batch size, epochs, aggregation cadence and seed.
    partition
        ``"iid"`` or ``"dirichlet"``.
    alpha
        Dirichlet concentration; required for ``"dirichlet"``.
    scheduler
        ``"deterministic"`` runs actors round-robin by client id on one thread;
        ``"concurrent"`` runs client computation on a thread pool.
    consensus_threshold
        Overrides the two-thirds share required by ``endGlobalModel``.
    client_fraction
        Share of live clients sampled into each aggregation cycle.
    dataset
        ``"synthetic"`` or ``"mnist"``.
    dataset_kwargs
        Options for the dataset loader.
    model_kwargs
        Options for the architecture, e.g. ``dims``.
    transient_limit
        Largest blob sent through the transient field; ``None`` uses
        ``fslsim.settings.transient_limit``.
    name
        Label used in logs and manifests.
    """

    n_clients: int = 10
    model: str = "tiny-mlp"
    train: TrainConfig = field(default_factory=TrainConfig)
    partition: str = "iid"
    alpha: Optional[float] = None
    scheduler: str = "deterministic"
    consensus_threshold: Optional[float] = None
    client_fraction: float = 1.0
    dataset: str = "synthetic"
    dataset_kwargs: Dict[str, Any] = field(default_factory=dict)
    model_kwargs: Dict[str, Any] = field(default_factory=dict)
    transient_limit: Optional[int] = None
    name: str = "scenario"

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be at least 1")
        if self.model not in ARCHITECTURES:
            raise ValueError(
                "unknown model spec '{}', expected one of {}".format(
                    self.model, sorted(ARCHITECTURES)
                )
            )
        if self.partition not in PARTITION_MODES:
            raise ValueError("partition must be one of {}".format(list(PARTITION_MODES)))
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.partition == "dirichlet" and self.alpha is None:
            raise ValueError("dirichlet partitioning needs alpha")
        if self.scheduler not in SCHEDULER_MODES:
            raise ValueError("scheduler must be one of {}".format(list(SCHEDULER_MODES)))
        if self.consensus_threshold is not None and not 0 <= self.consensus_threshold < 1:
            raise ValueError("consensus_threshold must be in [0, 1)")
        if not 0 < self.client_fraction <= 1:
            raise ValueError("client_fraction must be in (0, 1]")
        if self.dataset not in DATASETS:
            raise ValueError("dataset must be one of {}".format(list(DATASETS)))
        if self.transient_limit is not None and self.transient_limit < 0:
            raise ValueError("transient_limit must be non-negative")

    @property
    def aggregation_every(self) -> Optional[int]:
        return self.train.aggregation_every

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def deterministic(self) -> bool:
        return self.scheduler == "deterministic"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ScenarioConfig":
        values = dict(values)
        train = values.pop("train", {})
        if not isinstance(train, TrainConfig):
            train = TrainConfig(**dict(train))
        return cls(train=train, **values)
