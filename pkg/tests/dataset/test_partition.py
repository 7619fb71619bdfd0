import numpy as np
import pytest

from fslsim.data import (
    Dataset,
    largest_remainder,
    partition,
    partition_dirichlet,
    partition_iid,
    synthetic_gaussians,
)


@pytest.fixture(scope="module")
def train_set():
    train, _ = synthetic_gaussians(n=3000, n_test=600, seed=0)
    return train


def test_iid_partition(train_set):
    for n_clients in (1, 3, 7, 10):
        parts = partition_iid(train_set, n_clients, seed=1)
        sizes = list(parts.sizes.values())
        assert len(parts) == n_clients
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == len(train_set)
        assert parts.is_disjoint_cover()
    parts = partition_iid(train_set, 10, seed=1)
    assert list(parts) == ["client{:02d}".format(i) for i in range(1, 11)]
    np.testing.assert_array_equal(
        parts["client03"].y, train_set.y[parts.indices["client03"]]
    )
    again = partition_iid(train_set, 10, seed=1)
    assert all(np.array_equal(parts.indices[c], again.indices[c]) for c in parts)


def test_dirichlet_large_alpha_is_near_uniform(train_set):
    for seed in range(20):
        parts = partition_dirichlet(train_set, 10, alpha=1000, seed=seed)
        assert parts.is_disjoint_cover()
        histogram = parts.histogram()
        shares = histogram[["class_0", "class_1", "class_2"]].div(histogram["total"], axis=0)
        assert np.all(np.abs(shares.values - 1 / 3) <= 0.1 / 3)


def test_dirichlet_small_alpha_is_skewed(train_set):
    skewed = 0
    for seed in range(20):
        parts = partition_dirichlet(train_set, 10, alpha=0.1, seed=seed)
        assert parts.is_disjoint_cover()
        assert min(parts.sizes.values()) >= 1
        histogram = parts.histogram()
        top_share = histogram.drop(columns="total").max(axis=1) / histogram["total"]
        skewed += bool((top_share > 0.5).any())
    assert skewed >= 16


@pytest.mark.parametrize("alpha", [0.0, -1.0, float("nan")])
def test_dirichlet_rejects_bad_alpha(train_set, alpha):
    with pytest.raises(ValueError, match="alpha must be positive"):
        partition_dirichlet(train_set, 10, alpha=alpha)


def test_degenerate_partitions():
    small = Dataset(np.zeros((10, 2)), np.arange(10) % 2)
    with pytest.raises(ValueError, match="cannot split"):
        partition_iid(small, 11)
    with pytest.raises(ValueError, match="must be positive"):
        partition_iid(small, 0)
    with pytest.raises(ValueError, match="every class"):
        partition_dirichlet(Dataset(np.zeros((4, 2)), [0, 0, 1, 1], 3), 2, alpha=1.0)
    with pytest.raises(ValueError, match="degenerate partition"):
        partition_dirichlet(small, 10, alpha=0.01, seed=0, max_retries=2)

    # one sample per client still succeeds with uniform-ish proportions
    parts = partition_dirichlet(small, 2, alpha=100.0, seed=0)
    assert parts.is_disjoint_cover()


class CountingRandomState(np.random.RandomState):
    draws = 0

    def dirichlet(self, alpha, size=None):
        CountingRandomState.draws += 1
        return super().dirichlet(alpha, size)


def test_dirichlet_redraws_single_classes(monkeypatch):
    monkeypatch.setattr(np.random, "RandomState", CountingRandomState)
    small = Dataset(np.zeros((10, 2)), np.arange(10) % 2)

    CountingRandomState.draws = 0
    with pytest.raises(ValueError, match="degenerate partition"):
        partition_dirichlet(small, 10, alpha=0.01, seed=0, max_retries=2)
    # one draw per class, then one class per retry
    assert CountingRandomState.draws == 2 + 2

    skewed = Dataset(np.zeros((40, 2)), np.arange(40) % 4)
    for seed in range(5):
        CountingRandomState.draws = 0
        parts = partition_dirichlet(skewed, 8, alpha=0.5, seed=seed)
        assert parts.is_disjoint_cover()
        assert min(parts.sizes.values()) > 0
        assert 4 <= CountingRandomState.draws <= 4 + 1000


def test_partition_dispatch(train_set):
    assert partition(train_set, 4).sizes == partition_iid(train_set, 4).sizes
    dirichlet = partition(train_set, 4, mode="dirichlet", alpha=0.5, seed=3)
    assert dirichlet.sizes == partition_dirichlet(train_set, 4, 0.5, seed=3).sizes
    with pytest.raises(ValueError, match="needs alpha"):
        partition(train_set, 4, mode="dirichlet")
    with pytest.raises(ValueError, match="unknown partition mode"):
        partition(train_set, 4, mode="pathological")


def test_histogram(train_set):
    parts = partition_dirichlet(train_set, 5, alpha=0.5, seed=2)
    histogram = parts.histogram()
    assert list(histogram.columns) == ["class_0", "class_1", "class_2", "total"]
    assert histogram.index.name == "client_id"
    assert histogram["total"].to_dict() == parts.sizes
    np.testing.assert_array_equal(
        histogram.drop(columns="total").sum(axis=0).values, train_set.class_counts()
    )


def test_largest_remainder():
    assert largest_remainder(np.array([0.5, 0.25, 0.25]), 3).tolist() == [1, 1, 1]
    assert largest_remainder(np.full(3, 1 / 3), 10).tolist() == [4, 3, 3]
    random_state = np.random.RandomState(0)
    for _ in range(50):
        proportions = random_state.dirichlet(np.ones(7))
        total = random_state.randint(0, 500)
        counts = largest_remainder(proportions, total)
        assert counts.sum() == total
        assert np.all(np.abs(counts - proportions * total) < 1)
