"""fslsim."""

# Set default logging handler to avoid logging with logging.lastResort logger.
import logging
from logging import NullHandler

from ._constants import _CONSTANTS
from ._settings import settings
from . import actors, contract, core, data, ledger, store

import importlib.metadata as importlib_metadata

package_name = "fslsim"
try:
    __version__ = importlib_metadata.version(package_name)
except importlib_metadata.PackageNotFoundError:
    __version__ = "0.0.0"

logger = logging.getLogger(__name__)
logger.addHandler(NullHandler())

# this prevents double outputs
logger.propagate = False

__all__ = [
    "settings",
    "_CONSTANTS",
    "actors",
    "contract",
    "core",
    "data",
    "ledger",
    "store",
]
