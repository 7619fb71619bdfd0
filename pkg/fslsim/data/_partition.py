import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional

import numpy as np
import pandas as pd

from fslsim._utils import client_ids

from ._dataset import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DatasetPartition:
    """
    Disjoint assignment of a dataset's samples to clients.

    Parameters
    ----------
    dataset
        The partitioned dataset.
    indices
        Sample indices per client id, in the order each client iterates them.
    """

    dataset: Dataset
    indices: Dict[str, np.ndarray]

    def __getitem__(self, client_id: str) -> Dataset:
        return self.dataset.subset(self.indices[client_id])

    def __iter__(self) -> Iterator[str]:
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    @property
    def sizes(self) -> Dict[str, int]:
        return {c: int(len(idx)) for c, idx in self.indices.items()}

    def is_disjoint_cover(self) -> bool:
        allocated = np.concatenate(list(self.indices.values())) if self.indices else []
        return len(allocated) == len(self.dataset) and np.array_equal(
            np.sort(allocated), np.arange(len(self.dataset))
        )

    def histogram(self) -> pd.DataFrame:
        """Per-client class counts, one row per client."""
        rows = {
            c: np.bincount(self.dataset.y[idx], minlength=self.dataset.n_classes)
            for c, idx in self.indices.items()
        }
        frame = pd.DataFrame.from_dict(rows, orient="index")
        frame.columns = ["class_{}".format(k) for k in range(self.dataset.n_classes)]
        frame.index.name = "client_id"
        frame["total"] = frame.sum(axis=1)
        return frame


def _check(dataset: Dataset, n_clients: int):
    if n_clients <= 0:
        raise ValueError("number of clients must be positive")
    if len(dataset) < n_clients:
        raise ValueError(
            "cannot split {} samples across {} clients".format(len(dataset), n_clients)
        )


def partition_iid(dataset: Dataset, n_clients: int, seed: int = 0) -> DatasetPartition:
    """
    Shuffle and split into ``n_clients`` parts whose sizes differ by at most one.
    """
    _check(dataset, n_clients)
    permutation = np.random.RandomState(seed).permutation(len(dataset))
    parts = np.array_split(permutation, n_clients)
    return DatasetPartition(dataset, dict(zip(client_ids(n_clients), parts)))


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, as close as possible to ``proportions * total``."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - counts.sum()
    if remainder > 0:
        # stable sort keeps ties in client order
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def partition_dirichlet(
    dataset: Dataset,
    n_clients: int,
    alpha: float,
    seed: int = 0,
    max_retries: int = 1000,
) -> DatasetPartition:
    """
    Label-skewed partition.

    For every class, client proportions are drawn from ``Dirichlet(alpha)`` and the
    class's shuffled samples are dealt out by largest-remainder rounding. While a
    client is left without samples, single classes are redrawn in turn, at most
    ``max_retries`` redraws in total.

    Parameters
    ----------
    dataset
        Dataset to split; every class needs at least one sample.
    n_clients
        Number of clients.
    alpha
        Concentration; small values give strongly skewed clients.
    seed
        Seed of the draws.
    max_retries
        Redraw budget, counted in single-class redraws.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _check(dataset, n_clients)
    counts_per_class = dataset.class_counts()
    if np.any(counts_per_class == 0):
        raise ValueError("every class needs at least one sample")
    random_state = np.random.RandomState(seed)
    by_class = [np.flatnonzero(dataset.y == c) for c in range(dataset.n_classes)]
    concentration = np.full(n_clients, float(alpha))

    def draw(members: np.ndarray) -> Optional[np.ndarray]:
        proportions = random_state.dirichlet(concentration)
        if not np.all(np.isfinite(proportions)):
            return None
        return largest_remainder(proportions, len(members))

    counts: List[Optional[np.ndarray]] = [draw(members) for members in by_class]
    redraws = 0
    while True:
        pending = [c for c, drawn in enumerate(counts) if drawn is None]
        if not pending and np.sum(counts, axis=0).min() > 0:
            break
        if redraws == max_retries:
            raise ValueError(
                "degenerate partition: no draw gave every client a sample in {} "
                "retries".format(max_retries)
            )
        target = pending[0] if pending else redraws % len(by_class)
        counts[target] = draw(by_class[target])
        redraws += 1
    if redraws:
        logger.debug("Dirichlet partition needed {} class redraws.".format(redraws))

    allocation: List[List[np.ndarray]] = [[] for _ in range(n_clients)]
    for members, class_counts in zip(by_class, counts):
        shuffled = random_state.permutation(members)
        for client, chunk in enumerate(np.split(shuffled, np.cumsum(class_counts)[:-1])):
            allocation[client].append(chunk)
    indices = {
        cid: random_state.permutation(np.concatenate(chunks))
        for cid, chunks in zip(client_ids(n_clients), allocation)
    }
    return DatasetPartition(dataset, indices)


def partition(
    dataset: Dataset,
    n_clients: int,
    mode: str = "iid",
    alpha: Optional[float] = None,
    seed: int = 0,
) -> DatasetPartition:
    if mode == "iid":
        return partition_iid(dataset, n_clients, seed)
    if mode == "dirichlet":
        if alpha is None:
            raise ValueError("dirichlet partitioning needs alpha")
        return partition_dirichlet(dataset, n_clients, alpha, seed)
    raise ValueError("unknown partition mode '{}'".format(mode))
