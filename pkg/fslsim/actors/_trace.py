import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from fslsim import _CONSTANTS

#: columns of the per-epoch metrics file
METRICS_CSV_COLUMNS = [
    "epoch",
    "round",
    "global_acc",
    "global_loss",
    "client_fc_fwd_s",
    "client_fc_bwd_s",
    "server_batch_s",
    "agg_compute_s",
    "events_intermediate",
    "events_gradient",
    "ledger_bytes",
    "reference_bytes",
]

ROUNDS_CSV_COLUMNS = [
    "epoch",
    "round",
    "active_clients",
    "client_fc_fwd_s",
    "client_fc_bwd_s",
    "server_batch_s",
    "agg_compute_s",
    "submit_latency_s",
    "transactions",
    "events_intermediate",
    "events_gradient",
    "events_total",
    "bytes_activation",
    "bytes_gradient",
    "bytes_params",
    "server_loss",
    "aggregation_id",
    "aggregation_status",
    "denied_reads",
]


@dataclass
class RoundTrace:
    """
    What happened during one round.

    Timings are in seconds, from a wall clock in concurrent mode and from a step
    counter in deterministic mode.
    """

    round_id: int
    epoch: int
    fc_forward_s: Dict[str, float] = field(default_factory=dict)
    fc_backward_s: Dict[str, float] = field(default_factory=dict)
    server_batch_s: float = 0.0
    agg_compute_s: float = 0.0
    submit_latency_s: Dict[str, float] = field(default_factory=dict)
    events: Dict[str, int] = field(default_factory=dict)
    transactions: int = 0
    bytes_offchain: Dict[str, int] = field(
        default_factory=lambda: {"activation": 0, "gradient": 0, "params": 0}
    )
    server_loss: float = math.nan
    aggregation_id: str = ""
    aggregation_status: str = ""
    denied_reads: List[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add_latency(self, function: str, seconds: float):
        with self._lock:
            self.submit_latency_s[function] = self.submit_latency_s.get(function, 0.0) + seconds

    def add_bytes(self, kind: str, n: int):
        with self._lock:
            self.bytes_offchain[kind] = self.bytes_offchain.get(kind, 0) + n

    def timings(self) -> List[float]:
        return (
            list(self.fc_forward_s.values())
            + list(self.fc_backward_s.values())
            + list(self.submit_latency_s.values())
            + [self.server_batch_s, self.agg_compute_s]
        )

    def check(self):
        if any(t < 0 for t in self.timings()):
            raise ValueError("negative timing in round {}".format(self.round_id))

    @property
    def active_clients(self) -> int:
        return len(self.fc_forward_s)

    @staticmethod
    def _mean(values: Dict[str, float]) -> float:
        return sum(values.values()) / len(values) if values else 0.0

    def to_row(self) -> dict:
        return {
            "epoch": self.epoch,
            "round": self.round_id,
            "active_clients": self.active_clients,
            "client_fc_fwd_s": self._mean(self.fc_forward_s),
            "client_fc_bwd_s": self._mean(self.fc_backward_s),
            "server_batch_s": self.server_batch_s,
            "agg_compute_s": self.agg_compute_s,
            "submit_latency_s": sum(self.submit_latency_s.values()),
            "transactions": self.transactions,
            "events_intermediate": self.events.get(_CONSTANTS.INTERMEDIATE_ADDED, 0),
            "events_gradient": self.events.get(_CONSTANTS.GRADIENT_ADDED, 0),
            "events_total": sum(self.events.values()),
            "bytes_activation": self.bytes_offchain.get("activation", 0),
            "bytes_gradient": self.bytes_offchain.get("gradient", 0),
            "bytes_params": self.bytes_offchain.get("params", 0),
            "server_loss": self.server_loss,
            "aggregation_id": self.aggregation_id,
            "aggregation_status": self.aggregation_status,
            "denied_reads": len(self.denied_reads),
        }


def epoch_row(
    epoch: int,
    traces: List[RoundTrace],
    accuracy: float,
    loss: float,
    ledger_bytes: int,
    reference_bytes: int,
    last_round: Optional[int] = None,
) -> dict:
    """Per-epoch metrics row: timings summed over the epoch's rounds."""
    if last_round is None:
        last_round = traces[-1].round_id if traces else -1
    return {
        "epoch": epoch,
        "round": last_round,
        "global_acc": accuracy,
        "global_loss": loss,
        "client_fc_fwd_s": sum(RoundTrace._mean(t.fc_forward_s) for t in traces),
        "client_fc_bwd_s": sum(RoundTrace._mean(t.fc_backward_s) for t in traces),
        "server_batch_s": sum(t.server_batch_s for t in traces),
        "agg_compute_s": sum(t.agg_compute_s for t in traces),
        "events_intermediate": sum(
            t.events.get(_CONSTANTS.INTERMEDIATE_ADDED, 0) for t in traces
        ),
        "events_gradient": sum(t.events.get(_CONSTANTS.GRADIENT_ADDED, 0) for t in traces),
        "ledger_bytes": ledger_bytes,
        "reference_bytes": reference_bytes,
    }
