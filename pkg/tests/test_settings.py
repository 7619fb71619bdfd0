import logging

import pytest
from rich.logging import RichHandler

import fslsim
from fslsim._utils import client_ids, track


def test_verbosity_installs_one_handler():
    logger = logging.getLogger("fslsim")
    fslsim.settings.verbosity = logging.DEBUG
    fslsim.settings.verbosity = logging.WARNING
    handlers = [h for h in logger.handlers if isinstance(h, RichHandler)]
    assert len(handlers) == 1
    assert handlers[0].level == logging.WARNING
    assert logger.level == logging.WARNING
    fslsim.settings.verbosity = logging.INFO


def test_settings_validation():
    with pytest.raises(ValueError):
        fslsim.settings.progress_bar_style = "ascii"
    with pytest.raises(ValueError):
        fslsim.settings.transient_limit = -1
    limit = fslsim.settings.transient_limit
    fslsim.settings.transient_limit = 0
    assert fslsim.settings.transient_limit == 0
    fslsim.settings.transient_limit = limit


def test_store_dir_from_environment(monkeypatch, save_path):
    monkeypatch.setenv("FSLSIM_STORE_DIR", save_path)
    assert fslsim.settings.store_dir == save_path
    monkeypatch.delenv("FSLSIM_STORE_DIR")
    assert fslsim.settings.store_dir is None


def test_utils():
    assert client_ids(3) == ["client01", "client02", "client03"]
    assert client_ids(100)[0] == "client001"
    assert list(track([1, 2], disable=True)) == [1, 2]
    assert list(track([1, 2], style="rich")) == [1, 2]
    with pytest.raises(ValueError):
        track([1], style="bar")
