import logging
import threading
from typing import Dict, Mapping, Optional, Tuple

from fslsim import _CONSTANTS
from fslsim.store import BlobNotFoundError, Cid, OffchainStore

logger = logging.getLogger(__name__)


class PeerMailbox:
    """
    Transient payloads handed from the endorsing peer to their consumer.

    Entries are keyed by transaction id and removed when read.
    """

    def __init__(self):
        self._items: Dict[str, bytes] = {}
        self._lock = threading.Lock()

    def post(self, tx_id: str, blob: bytes):
        with self._lock:
            self._items[tx_id] = bytes(blob)

    def take(self, tx_id: str) -> Optional[bytes]:
        with self._lock:
            return self._items.pop(tx_id, None)

    def __contains__(self, tx_id: str):
        with self._lock:
            return tx_id in self._items

    def __len__(self):
        with self._lock:
            return len(self._items)


class BlobTransport:
    """
    Routes private blobs between actors.

    Blobs up to ``transient_limit`` bytes travel in the proposal's transient map and
    reach the consumer through the mailbox; larger ones are put in the off-chain store
    and only their cid is sent. Every blob is re-hashed on arrival.

    Parameters
    ----------
    store
        Shared off-chain store.
    mailbox
        Peer mailbox for transient payloads.
    transient_limit
        Size threshold in bytes.
    audit
        Optional store that receives a copy of every private blob, for leak scans.
    """

    def __init__(
        self,
        store: OffchainStore,
        mailbox: PeerMailbox,
        transient_limit: int,
        audit: Optional[OffchainStore] = None,
    ):
        self.store = store
        self.mailbox = mailbox
        self.transient_limit = transient_limit
        self.audit = audit

    def record(self, blob: bytes):
        if self.audit is not None:
            self.audit.put(blob)

    def ship(self, blob: bytes) -> Tuple[Cid, Mapping[str, bytes], bool]:
        """Cid, transient map and whether the blob must be posted to the mailbox."""
        self.record(blob)
        if len(blob) <= self.transient_limit:
            return Cid.of(blob), {_CONSTANTS.TRANSIENT_DATA_KEY: blob}, True
        cid = self.store.put(blob)
        return cid, {_CONSTANTS.TRANSIENT_CID_KEY: bytes(cid)}, False

    def publish(self, blob: bytes) -> Cid:
        """Put a blob in the off-chain store."""
        self.record(blob)
        return self.store.put(blob)

    def fetch(self, cid: Cid, tx_id: str = "") -> bytes:
        blob = self.mailbox.take(tx_id) if tx_id else None
        if blob is None:
            try:
                blob = self.store.get(cid)
            except BlobNotFoundError:
                logger.error("Blob {} (tx {}) is unavailable.".format(cid, tx_id[:12]))
                raise
        OffchainStore.verify(blob, cid)
        return bytes(blob)
