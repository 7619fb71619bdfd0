from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labelled samples held in memory.

    Parameters
    ----------
    X
        Features, one row (or image) per sample.
    y
        Integer class labels.
    n_classes
        Number of classes; inferred from ``y`` when omitted.
    """

    X: np.ndarray
    y: np.ndarray
    n_classes: Optional[int] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError("{} samples but {} labels".format(X.shape[0], y.shape[0]))
        if y.size and y.min() < 0:
            raise ValueError("labels must be non-negative")
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = int(y.max()) + 1 if y.size else 0
        elif y.size and y.max() >= n_classes:
            raise ValueError("label {} out of range for {} classes".format(y.max(), n_classes))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n_classes", int(n_classes))

    def __len__(self):
        return self.y.shape[0]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.y[indices], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)
