import logging
import os
from typing import Literal, Optional, Union

import numpy as np
import torch
from rich.console import Console
from rich.logging import RichHandler

from ._constants import _CONSTANTS

logger = logging.getLogger(__name__)
fslsim_logger = logging.getLogger("fslsim")


class FslsimConfig:
    """
    Config manager for fslsim.

    Examples
    --------
    >>> import fslsim
    >>> fslsim.settings.seed = 1
    >>> fslsim.settings.transient_limit = 64 * 1024
    """

    def __init__(
        self,
        verbosity: int = logging.INFO,
        progress_bar_style: Literal["rich", "tqdm"] = "tqdm",
        seed: int = 0,
        store_dir: Optional[str] = None,
        transient_limit: int = _CONSTANTS.TRANSIENT_LIMIT,
    ):

        self.verbosity = verbosity
        self.seed = seed
        self.progress_bar_style = progress_bar_style
        self.store_dir = store_dir
        self.transient_limit = transient_limit

    @property
    def progress_bar_style(self) -> str:
        """Library to use for progress bar."""
        return self._pbar_style

    @progress_bar_style.setter
    def progress_bar_style(self, pbar_style: Literal["tqdm", "rich"]):
        if pbar_style not in ("rich", "tqdm"):
            raise ValueError("progress bar style must be one of ['rich', 'tqdm']")
        self._pbar_style = pbar_style

    @property
    def seed(self) -> int:
        """Random seed for torch and numpy."""
        return self._seed

    @seed.setter
    def seed(self, seed: int):
        """Random seed for torch and numpy."""
        torch.manual_seed(seed)
        np.random.seed(seed)
        self._seed = seed

    @property
    def store_dir(self) -> Optional[str]:
        """
        Directory backing the off-chain blob store.

        Falls back to the ``FSLSIM_STORE_DIR`` environment variable; ``None`` keeps
        blobs in memory only.
        """
        if self._store_dir is not None:
            return self._store_dir
        return os.environ.get(_CONSTANTS.STORE_DIR_ENV) or None

    @store_dir.setter
    def store_dir(self, store_dir: Optional[str]):
        self._store_dir = store_dir

    @property
    def transient_limit(self) -> int:
        """Largest blob (bytes) sent in a transient field; larger blobs go off-chain."""
        return self._transient_limit

    @transient_limit.setter
    def transient_limit(self, limit: int):
        if limit < 0:
            raise ValueError("transient_limit must be non-negative")
        self._transient_limit = limit

    @property
    def verbosity(self) -> int:
        """Verbosity level (default `logging.INFO`)."""
        return self._verbosity

    @verbosity.setter
    def verbosity(self, level: Union[str, int]):
        """
        Set the level of the "fslsim" logger and of its rich handler.

        The handler writes to stderr so that CSV written to stdout stays clean; it is
        installed on first use.
        """
        self._verbosity = level
        fslsim_logger.setLevel(level)
        handlers = [h for h in fslsim_logger.handlers if isinstance(h, RichHandler)]
        if handlers:
            for handler in handlers:
                handler.setLevel(level)
            return
        console = Console(stderr=True)
        handler = RichHandler(show_path=False, console=console, show_time=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        fslsim_logger.addHandler(handler)
        logger.debug("Added rich handler to the 'fslsim' logger.")


settings = FslsimConfig()
