import base64
import logging
import os
from typing import Iterable, List, Union

import pandas as pd

from ._types import TransactionRecord

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["height", "tx_count", "ledger_bytes", "reference_bytes", "pdc_bytes_total"]


def export_ledger(records: Iterable[TransactionRecord], path: Union[str, os.PathLike]) -> int:
    """
    Write committed records to ``path``, one base64 line per serialized record.

    Returns
    -------
    Number of records written.
    """
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            if not record.committed:
                continue
            f.write(base64.b64encode(record.serialize()).decode("ascii"))
            f.write("\n")
            n += 1
    logger.info("Exported {} ledger records to {}.".format(n, path))
    return n


def read_ledger(path: Union[str, os.PathLike]) -> List[TransactionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(TransactionRecord.deserialize(base64.b64decode(line)))
            except ValueError as error:
                raise ValueError("{}:{}: {}".format(path, lineno, error)) from error
    return records


def ledger_file_bytes(path: Union[str, os.PathLike]) -> bytes:
    """Concatenated decoded records of an exported ledger file."""
    return b"".join(r.serialize() for r in read_ledger(path))


def metrics_frame(history: Iterable[dict]) -> pd.DataFrame:
    return pd.DataFrame(list(history), columns=METRICS_COLUMNS)


def export_metrics_csv(history: Iterable[dict], path: Union[str, os.PathLike]):
    """Per-height ledger growth as CSV."""
    metrics_frame(history).to_csv(path, index=False)
