"""Substring scans that look for private bytes in persisted ledger artifacts."""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

_CHUNK = 1 << 20
_BASE = np.uint64(1099511628211)


@dataclass(frozen=True)
class Leak:
    source: int
    offset: int
    fragment: bytes


def find_value_leaks(
    haystack: bytes, values: Iterable[bytes], min_length: int = 9
) -> List[Leak]:
    """
    Values of at least ``min_length`` bytes that occur verbatim in ``haystack``.
    """
    leaks = []
    for i, value in enumerate(values):
        if len(value) < min_length:
            continue
        offset = haystack.find(value)
        if offset >= 0:
            leaks.append(Leak(i, offset, bytes(value)))
    return leaks


def _windows(data: bytes, window: int) -> np.ndarray:
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size < window:
        return np.empty((0, window), dtype=np.uint8)
    return sliding_window_view(arr, window)


def _keys(windows: np.ndarray) -> np.ndarray:
    keys = np.zeros(windows.shape[0], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(windows.shape[1]):
            keys = keys * _BASE + windows[:, j].astype(np.uint64)
    return keys


def _distinct(windows: np.ndarray) -> np.ndarray:
    ordered = np.sort(windows, axis=1)
    return (np.diff(ordered, axis=1) != 0).sum(axis=1) + 1


def find_fragment_leaks(
    haystack: bytes,
    blobs: Sequence[bytes],
    window: int = 9,
    min_distinct: int = 6,
    max_reports: int = 20,
) -> List[Leak]:
    """
    Fragments of ``blobs`` of length ``window`` that appear in ``haystack``.

    Windows with fewer than ``min_distinct`` distinct byte values (zero runs, small
    length prefixes) are skipped. Every candidate is confirmed by an exact search.

    Parameters
    ----------
    haystack
        Persisted bytes, e.g. the concatenated serialized ledger.
    blobs
        Private payloads that must not appear in ``haystack``.
    window
        Fragment length; a leak is any shared run of at least this many bytes.
    min_distinct
        Entropy floor for a fragment to count.
    max_reports
        Stop after this many confirmed leaks.
    """
    hay_windows = _windows(haystack, window)
    if hay_windows.shape[0] == 0:
        return []
    hay_keys = np.unique(_keys(hay_windows))
    leaks: List[Leak] = []
    for source, blob in enumerate(blobs):
        for start in range(0, max(len(blob) - window + 1, 0), _CHUNK):
            chunk = blob[start : start + _CHUNK + window - 1]
            windows = _windows(chunk, window)
            if windows.shape[0] == 0:
                continue
            keep = _distinct(windows) >= min_distinct
            hits = np.flatnonzero(keep & np.isin(_keys(windows), hay_keys))
            for offset in hits:
                fragment = bytes(chunk[offset : offset + window])
                if fragment in haystack:
                    leaks.append(Leak(source, start + int(offset), fragment))
                    if len(leaks) >= max_reports:
                        return leaks
    if leaks:
        logger.warning("Found {} leaked fragments.".format(len(leaks)))
    return leaks
