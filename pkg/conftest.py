import shutil

import pytest

import fslsim
from fslsim import _CONSTANTS


def pytest_addoption(parser):
    parser.addoption(
        "--model_fit",
        action="store_true",
        default=False,
        dest="model_fit",
        help="Also run the long training checks (non-IID seed sweep, MNIST).",
    )
    parser.addoption(
        "--internet-tests",
        action="store_true",
        default=False,
        help="Run tests that download datasets.",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "internet: test downloads data")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--internet-tests"):
        return
    offline = pytest.mark.skip(reason="needs --internet-tests")
    for item in items:
        if "internet" in item.keywords:
            item.add_marker(offline)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch):
    """Keep blobs in memory and restore any setting a test changes."""
    monkeypatch.delenv(_CONSTANTS.STORE_DIR_ENV, raising=False)
    saved = {
        "store_dir": fslsim.settings._store_dir,
        "transient_limit": fslsim.settings.transient_limit,
        "progress_bar_style": fslsim.settings.progress_bar_style,
    }
    yield
    for name, value in saved.items():
        setattr(fslsim.settings, name, value)


@pytest.fixture(scope="session")
def save_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("fslsim_runs", numbered=False)
    yield str(root) + "/"
    shutil.rmtree(str(root), ignore_errors=True)


@pytest.fixture(scope="session")
def model_fit(request):
    return request.config.getoption("--model_fit")
