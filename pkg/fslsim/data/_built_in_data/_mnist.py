import gzip
import logging
import os
import struct
from typing import Tuple

import numpy as np

from .._dataset import Dataset
from ._download import _download

logger = logging.getLogger(__name__)

MNIST_URL = "https://ossci-datasets.s3.amazonaws.com/mnist/"
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}

# IDX type codes
_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path: str) -> np.ndarray:
    """Read an IDX file, gzipped or not."""
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise ValueError("{} is not an IDX file".format(path))
    try:
        dtype = np.dtype(_DTYPES[data[2]])
    except KeyError:
        raise ValueError("unknown IDX type code {:#x}".format(data[2])) from None
    rank = data[3]
    shape = struct.unpack(">" + "I" * rank, data[4 : 4 + 4 * rank])
    body = data[4 + 4 * rank :]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(body) != expected:
        raise ValueError("{}: expected {} data bytes, found {}".format(path, expected, len(body)))
    return np.frombuffer(body, dtype=dtype).reshape(shape)


def _locate(save_path: str, filename: str) -> str:
    for candidate in (filename, filename[: -len(".gz")]):
        path = os.path.join(save_path, candidate)
        if os.path.exists(path):
            return path
    return os.path.join(save_path, filename)


def _load_mnist(save_path: str = "data/", download: bool = True) -> Tuple[Dataset, Dataset]:
    save_path = os.path.abspath(save_path)
    arrays = {}
    for key, filename in MNIST_FILES.items():
        path = _locate(save_path, filename)
        if not os.path.exists(path):
            if not download:
                raise FileNotFoundError("missing MNIST file {}".format(path))
            _download(MNIST_URL + filename, save_path, filename)
        arrays[key] = read_idx(path)

    def _dataset(images, labels):
        X = images.astype(np.float64)[:, None, :, :] / 255.0
        return Dataset(X, labels.astype(np.int64), 10)

    train = _dataset(arrays["train_images"], arrays["train_labels"])
    test = _dataset(arrays["test_images"], arrays["test_labels"])
    logger.info("Loaded MNIST: {} train, {} test images.".format(len(train), len(test)))
    return train, test
