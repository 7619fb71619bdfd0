import gzip
import os
import struct
from unittest import TestCase

import numpy as np
import pytest

import fslsim
from fslsim.data import Dataset, read_idx

from .utils import train_one_epoch


class TestSyntheticDataset(TestCase):
    def test_populate(self):
        train, test = fslsim.data.synthetic_gaussians(n=3000, n_test=600)
        self.assertEqual(len(train), 3000)
        self.assertEqual(len(test), 600)
        self.assertEqual(train.X.shape, (3000, 2))
        self.assertEqual(train.n_classes, 3)
        # stratified test split
        np.testing.assert_array_equal(test.class_counts(), [200, 200, 200])
        trainer = train_one_epoch(train)
        self.assertEqual(trainer.n_iter, int(np.ceil(3000 / 64)))

    def test_seeded(self):
        a, _ = fslsim.data.synthetic_gaussians(n=100, n_test=20, seed=3)
        b, _ = fslsim.data.synthetic_gaussians(n=100, n_test=20, seed=3)
        c, _ = fslsim.data.synthetic_gaussians(n=100, n_test=20, seed=4)
        np.testing.assert_array_equal(a.X, b.X)
        self.assertFalse(np.array_equal(a.X, c.X))

    def test_options(self):
        train, test = fslsim.data.synthetic_gaussians(n_classes=5, dim=4, n=500, n_test=0)
        self.assertEqual(train.X.shape, (500, 4))
        self.assertEqual(len(test), 0)
        self.assertEqual(train.n_classes, 5)
        with self.assertRaises(ValueError):
            fslsim.data.synthetic_gaussians(n_classes=1)


class TestDataset(TestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(2))
        with self.assertRaises(ValueError):
            Dataset(np.zeros((2, 2)), np.array([0, -1]))
        with self.assertRaises(ValueError):
            Dataset(np.zeros((2, 2)), np.array([0, 3]), n_classes=3)
        dataset = Dataset(np.arange(8).reshape(4, 2), [0, 1, 1, 2])
        self.assertEqual(dataset.n_classes, 3)
        subset = dataset.subset([3, 1])
        np.testing.assert_array_equal(subset.y, [2, 1])
        self.assertEqual(subset.n_classes, 3)
        np.testing.assert_array_equal(subset.class_counts(), [0, 1, 1])


def _write_idx(path, array, type_code):
    header = struct.pack(">BBBB", 0, 0, type_code, array.ndim)
    header += struct.pack(">" + "I" * array.ndim, *array.shape)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(header + array.astype(array.dtype.newbyteorder(">")).tobytes())


def test_read_idx(save_path):
    images = np.random.RandomState(0).randint(0, 256, size=(5, 28, 28)).astype(np.uint8)
    labels = np.array([0, 9, 3, 3, 1], dtype=np.uint8)
    image_path = os.path.join(save_path, "images-idx3-ubyte.gz")
    label_path = os.path.join(save_path, "labels-idx1-ubyte")
    _write_idx(image_path, images, 0x08)
    _write_idx(label_path, labels, 0x08)
    np.testing.assert_array_equal(read_idx(image_path), images)
    np.testing.assert_array_equal(read_idx(label_path), labels)

    broken = os.path.join(save_path, "broken-idx")
    with open(broken, "wb") as f:
        f.write(b"\x01\x02\x08\x01")
    with pytest.raises(ValueError, match="not an IDX file"):
        read_idx(broken)


def test_mnist_missing_files(save_path):
    with pytest.raises(FileNotFoundError):
        fslsim.data.mnist(save_path=os.path.join(save_path, "no-mnist"), download=False)


@pytest.mark.internet
def test_download_mnist(save_path):
    train, test = fslsim.data.mnist(save_path=save_path)
    assert train.X.shape == (60000, 1, 28, 28)
    assert len(test) == 10000
    assert 0.0 <= train.X.min() and train.X.max() <= 1.0
    train_one_epoch(train.subset(np.arange(256)), "mnist-cnn-5")
