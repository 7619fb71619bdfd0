from typing import Tuple

from ._built_in_data._mnist import _load_mnist
from ._built_in_data._synthetic import _generate_gaussians
from ._dataset import Dataset


def synthetic_gaussians(
    n_classes: int = 3,
    dim: int = 2,
    n: int = 3000,
    n_test: int = 600,
    radius: float = 3.0,
    std: float = 1.0,
    seed: int = 0,
) -> Tuple[Dataset, Dataset]:
    """
    Isotropic Gaussian classes with centers evenly spaced on a circle.

    Parameters
    ----------
    n_classes
        Number of classes.
    dim
        Feature dimension; centers lie in the first two coordinates.
    n
        Training samples.
    n_test
        Test samples, stratified by class.
    radius
        Distance of each center from the origin.
    std
        Per-coordinate standard deviation.
    seed
        Seed of the sampler and the split.

    Returns
    -------
    Train and test datasets.

    Examples
    --------
    >>> import fslsim
    >>> train, test = fslsim.data.synthetic_gaussians(n=3000, n_test=600)
    """
    return _generate_gaussians(
        n_classes=n_classes, dim=dim, n=n, n_test=n_test, radius=radius, std=std, seed=seed
    )


def mnist(save_path: str = "data/", download: bool = True) -> Tuple[Dataset, Dataset]:
    """
    MNIST digits from the IDX files, scaled to ``[0, 1]`` with shape ``(1, 28, 28)``.

    Parameters
    ----------
    save_path
        Location to use when saving/loading the data.
    download
        Fetch missing files.

    Returns
    -------
    Train (60000) and test (10000) datasets.
    """
    return _load_mnist(save_path=save_path, download=download)
