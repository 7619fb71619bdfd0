import logging

import numpy as np
from sklearn.datasets import make_blobs
from sklearn.model_selection import train_test_split

from .._dataset import Dataset

logger = logging.getLogger(__name__)


def _generate_gaussians(
    n_classes: int = 3,
    dim: int = 2,
    n: int = 3000,
    n_test: int = 600,
    radius: float = 3.0,
    std: float = 1.0,
    seed: int = 0,
):
    if n_classes < 2 or dim < 2:
        raise ValueError("need at least 2 classes and 2 dimensions")
    if n < n_classes or n_test < 0:
        raise ValueError("need at least one training sample per class")
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    X, y = make_blobs(
        n_samples=n + n_test, centers=centers, cluster_std=std, random_state=seed
    )
    if n_test == 0:
        return Dataset(X, y, n_classes), Dataset(X[:0], y[:0], n_classes)
    X_train, X_test, y_train, y_test = train_test_split(
        X, y, test_size=n_test, random_state=seed, stratify=y
    )
    logger.debug(
        "Generated {} train and {} test samples from {} Gaussians.".format(
            len(y_train), len(y_test), n_classes
        )
    )
    return Dataset(X_train, y_train, n_classes), Dataset(X_test, y_test, n_classes)
