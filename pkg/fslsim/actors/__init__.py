from ._client import ClientActor, Contribution
from ._clock import Span, StepClock, WallClock
from ._config import PARTITION_MODES, SCHEDULER_MODES, ScenarioConfig
from ._driver import (
    FAULT_KINDS,
    FSLDriver,
    RoundAbortedError,
    TrainingResult,
    load_scenario_data,
    run_training,
)
from ._mailbox import BlobTransport, PeerMailbox
from ._scheduler import ConcurrentScheduler, DeterministicScheduler, make_scheduler
from ._server import ServerActor
from ._trace import METRICS_CSV_COLUMNS, ROUNDS_CSV_COLUMNS, RoundTrace, epoch_row

__all__ = [
    "BlobTransport",
    "ClientActor",
    "ConcurrentScheduler",
    "Contribution",
    "DeterministicScheduler",
    "FAULT_KINDS",
    "FSLDriver",
    "METRICS_CSV_COLUMNS",
    "PARTITION_MODES",
    "PeerMailbox",
    "ROUNDS_CSV_COLUMNS",
    "RoundAbortedError",
    "RoundTrace",
    "SCHEDULER_MODES",
    "ScenarioConfig",
    "ServerActor",
    "Span",
    "StepClock",
    "TrainingResult",
    "WallClock",
    "epoch_row",
    "load_scenario_data",
    "make_scheduler",
    "run_training",
]
