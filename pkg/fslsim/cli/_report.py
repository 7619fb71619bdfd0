import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from fslsim import _CONSTANTS
from fslsim.contract import IntermediateNotice
from fslsim.ledger import TransactionRecord, read_ledger

from ._config import ARTIFACTS, ConfigError

logger = logging.getLogger(__name__)

ACCURACY_THRESHOLDS = (0.90, 0.95, 0.98)
SETUP_FUNCTIONS = ("registerServer", "registerClient", "publishModel")
TRAINING_EVENTS = (_CONSTANTS.INTERMEDIATE_ADDED, _CONSTANTS.GRADIENT_ADDED)


@dataclass
class RunReport:
    """Summary numbers of a finished run."""

    height: int = 0
    tx_count: int = 0
    ledger_bytes: int = 0
    reference_bytes: int = 0
    events_by_name: Dict[str, int] = field(default_factory=dict)
    reference_bytes_by_event: Dict[str, int] = field(default_factory=dict)
    tx_by_function: Dict[str, int] = field(default_factory=dict)
    rounds: int = 0
    growth: List[Tuple[int, int]] = field(default_factory=list)
    offchain_bytes: Dict[str, int] = field(default_factory=dict)
    epochs: int = 0
    first_accuracy: float = float("nan")
    final_accuracy: float = float("nan")
    best_accuracy: float = float("nan")
    final_loss: float = float("nan")
    epochs_to_accuracy: Dict[float, Optional[int]] = field(default_factory=dict)

    @property
    def training_events(self) -> int:
        return sum(self.events_by_name.get(name, 0) for name in TRAINING_EVENTS)

    @property
    def training_reference_bytes(self) -> int:
        return sum(self.reference_bytes_by_event.get(name, 0) for name in TRAINING_EVENTS)

    @property
    def doubled_reference_bytes(self) -> int:
        """Reference bytes when ``2 * |D| / B`` events are counted per type."""
        return 2 * self.training_reference_bytes

    @property
    def training_tx_count(self) -> int:
        setup = sum(self.tx_by_function.get(f, 0) for f in SETUP_FUNCTIONS)
        return self.tx_count - setup

    @property
    def tx_per_round(self) -> float:
        return self.training_tx_count / self.rounds if self.rounds else 0.0

    def to_frame(self) -> pd.DataFrame:
        """Flat ``metric, value`` table."""
        rows = [
            ("height", self.height),
            ("tx_count", self.tx_count),
            ("ledger_bytes", self.ledger_bytes),
            ("reference_bytes", self.reference_bytes),
            ("rounds", self.rounds),
            ("training_tx_count", self.training_tx_count),
            ("tx_per_round", self.tx_per_round),
            ("training_events", self.training_events),
            ("training_reference_bytes", self.training_reference_bytes),
            ("doubled_reference_bytes", self.doubled_reference_bytes),
        ]
        rows += [("events." + k, v) for k, v in sorted(self.events_by_name.items())]
        rows += [
            ("reference_bytes." + k, v)
            for k, v in sorted(self.reference_bytes_by_event.items())
        ]
        rows += [("tx." + k, v) for k, v in sorted(self.tx_by_function.items())]
        rows += [("offchain_bytes." + k, v) for k, v in sorted(self.offchain_bytes.items())]
        rows += [
            ("epochs", self.epochs),
            ("first_accuracy", self.first_accuracy),
            ("final_accuracy", self.final_accuracy),
            ("best_accuracy", self.best_accuracy),
            ("final_loss", self.final_loss),
        ]
        rows += [
            ("epochs_to_{:.2f}".format(t), e)
            for t, e in sorted(self.epochs_to_accuracy.items())
        ]
        return pd.DataFrame(rows, columns=["metric", "value"])


def ledger_summary(records: Sequence[TransactionRecord], report: Optional[RunReport] = None):
    """Fill the ledger numbers of ``report`` from committed records alone."""
    report = report if report is not None else RunReport()
    events, reference, functions = Counter(), Counter(), Counter()
    round_ids = set()
    size = 0
    for record in sorted((r for r in records if r.committed), key=lambda r: r.height):
        size += len(record.serialize())
        functions[record.function] += 1
        report.growth.append((record.height, size))
        for event in record.events:
            events[event.name] += 1
            reference[event.name] += event.reference_bytes
            if event.name == _CONSTANTS.INTERMEDIATE_ADDED:
                round_ids.add(IntermediateNotice.from_bytes(event.payload).round_id)
    report.height = report.growth[-1][0] if report.growth else 0
    report.tx_count = sum(functions.values())
    report.ledger_bytes = size
    report.reference_bytes = sum(reference.values())
    report.events_by_name = dict(events)
    report.reference_bytes_by_event = dict(reference)
    report.tx_by_function = dict(functions)
    report.rounds = len(round_ids)
    return report


def first_epoch_reaching(accuracy: Sequence[float], epochs: Sequence[int], threshold: float):
    for epoch, acc in zip(epochs, accuracy):
        if acc >= threshold:
            return int(epoch)
    return None


def build_report(
    run_dir: Union[str, os.PathLike], thresholds: Sequence[float] = ACCURACY_THRESHOLDS
) -> RunReport:
    """
    Read the artifacts of ``fslsim run`` in ``run_dir``.

    Ledger numbers come from the exported ledger; the accuracy summary from
    ``metrics.csv`` and off-chain traffic from ``rounds.csv`` when present.
    """
    ledger_path = os.path.join(run_dir, ARTIFACTS["ledger"])
    if not os.path.exists(ledger_path):
        raise ConfigError("missing artifact: {}".format(ledger_path))
    report = ledger_summary(read_ledger(ledger_path))

    metrics_path = os.path.join(run_dir, ARTIFACTS["metrics"])
    if os.path.exists(metrics_path):
        metrics = pd.read_csv(metrics_path)
        report.epochs = len(metrics)
        if len(metrics):
            accuracy = metrics["global_acc"].to_numpy(dtype=np.float64)
            report.first_accuracy = float(accuracy[0])
            report.final_accuracy = float(accuracy[-1])
            report.best_accuracy = float(accuracy.max())
            report.final_loss = float(metrics["global_loss"].iloc[-1])
        report.epochs_to_accuracy = {
            t: first_epoch_reaching(metrics["global_acc"], metrics["epoch"], t)
            for t in thresholds
        }
    else:
        logger.warning(
            "No {} in {}; skipping the accuracy summary.".format(ARTIFACTS["metrics"], run_dir)
        )

    rounds_path = os.path.join(run_dir, ARTIFACTS["rounds"])
    if os.path.exists(rounds_path):
        rounds = pd.read_csv(rounds_path)
        report.offchain_bytes = {
            kind: int(rounds["bytes_" + kind].sum())
            for kind in ("activation", "gradient", "params")
        }
    return report


def _table(title: str, rows, columns=("", "value")) -> Table:
    table = Table(title=title, title_justify="left")
    for i, column in enumerate(columns):
        table.add_column(column, justify="left" if i == 0 else "right")
    for row in rows:
        table.add_row(*[str(v) for v in row])
    return table


def render_report(report: RunReport, console: Optional[Console] = None):
    """Print ``report`` as rich tables."""
    console = console if console is not None else Console()
    console.print(
        _table(
            "Ledger",
            [
                ("height", report.height),
                ("committed transactions", report.tx_count),
                ("ledger bytes", "{:,}".format(report.ledger_bytes)),
                ("reference bytes", "{:,}".format(report.reference_bytes)),
                ("rounds", report.rounds),
                ("transactions per round", "{:.2f}".format(report.tx_per_round)),
            ],
        )
    )
    console.print(
        _table(
            "Events",
            [
                (name, count, "{:,}".format(report.reference_bytes_by_event.get(name, 0)))
                for name, count in sorted(report.events_by_name.items())
            ],
            columns=("event", "count", "reference bytes"),
        )
    )
    console.print(
        "Activation and gradient references: {} events, {:,} bytes. Counting 2 x |D|/B "
        "events per type instead gives {:,} bytes.".format(
            report.training_events,
            report.training_reference_bytes,
            report.doubled_reference_bytes,
        )
    )
    console.print(
        _table(
            "Transactions per function",
            sorted(report.tx_by_function.items()),
            columns=("function", "count"),
        )
    )
    if report.offchain_bytes:
        console.print(
            _table(
                "Off-chain traffic",
                [(k, "{:,}".format(v)) for k, v in sorted(report.offchain_bytes.items())],
                columns=("blob", "bytes"),
            )
        )
    rows = [
        ("epochs", report.epochs),
        ("first accuracy", "{:.4f}".format(report.first_accuracy)),
        ("final accuracy", "{:.4f}".format(report.final_accuracy)),
        ("best accuracy", "{:.4f}".format(report.best_accuracy)),
        ("final loss", "{:.4f}".format(report.final_loss)),
    ]
    rows += [
        ("epochs to {:.2f}".format(t), "-" if e is None else e)
        for t, e in sorted(report.epochs_to_accuracy.items())
    ]
    console.print(_table("Accuracy", rows))
