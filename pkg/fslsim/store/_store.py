import logging
import os
import threading
from typing import Dict, Iterable, Iterator, Optional, Set, Union

from fslsim._settings import settings

from ._cid import Blob, Cid

logger = logging.getLogger(__name__)


class BlobNotFoundError(KeyError):
    def __str__(self):
        return "not found: {}".format(self.args[0] if self.args else "")


class OffchainStore:
    """
    Content-addressed blob store.

    Blobs live in memory and, when ``root`` is set, are mirrored to
    ``root/<first 2 chars of cid>/<cid>`` as raw bytes. An existing directory is
    loaded lazily on lookup.

    Parameters
    ----------
    root
        Backing directory. ``None`` uses ``fslsim.settings.store_dir``; pass an empty
        string to force a memory-only store.
    """

    def __init__(self, root: Optional[Union[str, os.PathLike]] = None):
        if root is None:
            root = settings.store_dir
        self.root = os.fspath(root) if root else None
        self._blobs: Dict[Cid, Blob] = {}
        self._lock = threading.RLock()
        self.bytes_written = 0
        if self.root is not None:
            os.makedirs(self.root, exist_ok=True)
            logger.debug("Off-chain store backed by {}".format(self.root))

    def _path(self, cid: Cid) -> str:
        return os.path.join(self.root, cid[2:4], cid)

    def put(self, blob: bytes) -> Cid:
        """Store ``blob`` and return its cid. Storing the same bytes twice is a no-op."""
        blob = Blob(blob)
        cid = Cid.of(blob)
        with self._lock:
            if cid in self._blobs:
                return cid
            self._blobs[cid] = blob
            self.bytes_written += blob.size
            if self.root is not None:
                path = self._path(cid)
                if not os.path.exists(path):
                    os.makedirs(os.path.dirname(path), exist_ok=True)
                    tmp = "{}.tmp-{}".format(path, threading.get_ident())
                    with open(tmp, "wb") as f:
                        f.write(blob)
                    os.replace(tmp, path)
        logger.debug("Stored {} ({} bytes)".format(cid, blob.size))
        return cid

    def get(self, cid: Union[Cid, str]) -> Blob:
        cid = self._as_cid(cid)
        with self._lock:
            blob = self._blobs.get(cid)
            if blob is None and self.root is not None and os.path.exists(self._path(cid)):
                with open(self._path(cid), "rb") as f:
                    blob = Blob(f.read())
                if Cid.of(blob) != cid:
                    raise ValueError("corrupt blob on disk for {}".format(cid))
                self._blobs[cid] = blob
        if blob is None:
            raise BlobNotFoundError(cid)
        return blob

    @staticmethod
    def _as_cid(cid) -> Cid:
        try:
            return Cid(cid)
        except ValueError:
            raise BlobNotFoundError(cid) from None

    def contains(self, cid: Union[Cid, str]) -> bool:
        if not Cid.is_valid(cid):
            return False
        try:
            self.get(cid)
        except BlobNotFoundError:
            return False
        return True

    __contains__ = contains

    @staticmethod
    def verify(blob: bytes, cid: Optional[Union[Cid, str]] = None) -> Cid:
        """
        Re-hash ``blob``; if ``cid`` is given, check that it matches.
        """
        actual = Cid.of(blob)
        if cid is not None and actual != cid:
            raise ValueError("hash verification failed: expected {}, got {}".format(cid, actual))
        return actual

    def gc(self, live_set: Iterable[Union[Cid, str]]) -> int:
        """
        Remove every blob outside ``live_set``.

        Returns
        -------
        Number of blobs removed.
        """
        live = {str(c) for c in live_set}
        with self._lock:
            dead = [c for c in self._known() if c not in live]
            for cid in dead:
                self._blobs.pop(cid, None)
                if self.root is not None and os.path.exists(self._path(cid)):
                    os.remove(self._path(cid))
        if dead:
            logger.debug("Collected {} unreferenced blobs".format(len(dead)))
        return len(dead)

    def _known(self) -> Set[Cid]:
        known = set(self._blobs)
        if self.root is not None:
            for shard in os.listdir(self.root):
                shard_dir = os.path.join(self.root, shard)
                if os.path.isdir(shard_dir):
                    known.update(Cid(n) for n in os.listdir(shard_dir) if Cid.is_valid(n))
        return known

    def cids(self) -> Iterator[Cid]:
        """Every stored cid, including blobs only present in the backing directory."""
        with self._lock:
            return iter(sorted(self._known()))

    @property
    def total_bytes(self) -> int:
        with self._lock:
            return sum(b.size for b in self._blobs.values())

    def __len__(self):
        with self._lock:
            return len(self._blobs)
