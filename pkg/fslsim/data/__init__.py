from ._built_in_data._mnist import read_idx
from ._dataset import Dataset
from ._datasets import mnist, synthetic_gaussians
from ._partition import (
    DatasetPartition,
    largest_remainder,
    partition,
    partition_dirichlet,
    partition_iid,
)

__all__ = [
    "Dataset",
    "DatasetPartition",
    "largest_remainder",
    "mnist",
    "partition",
    "partition_dirichlet",
    "partition_iid",
    "read_idx",
    "synthetic_gaussians",
]
