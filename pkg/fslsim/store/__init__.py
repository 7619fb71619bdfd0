from ._cid import Blob, Cid
from ._store import BlobNotFoundError, OffchainStore

__all__ = ["Blob", "BlobNotFoundError", "Cid", "OffchainStore"]
