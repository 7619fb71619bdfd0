import copy
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple, Union

from ._codec import Decoder, Encoder
from ._exceptions import LedgerError

ArgLike = Union[bytes, str, int]


class Role(Enum):
    CLIENT = "Client"
    SERVER_ENTITY = "ServerEntity"
    ADMIN = "Admin"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MspId:
    """
    Membership service provider of one organization.

    Parameters
    ----------
    name
        Short identifier, e.g. ``"Client1MSP"``. Identity of the MSP is its name.
    role
        Role of the organization behind the MSP.
    """

    name: str
    role: Role = field(default=Role.CLIENT, compare=False)

    def __post_init__(self):
        if not self.name:
            raise ValueError("MSP name must be non-empty")

    def __str__(self):
        return self.name

    def __lt__(self, other: "MspId"):
        return self.name < other.name


@dataclass(frozen=True)
class Identity:
    msp: MspId
    actor_id: str
    role: Role

    def __str__(self):
        return "{}@{}".format(self.actor_id, self.msp)


def _msp_set(members: Iterable[MspId]) -> FrozenSet[MspId]:
    return frozenset(members)


@dataclass(frozen=True)
class PdcDefinition:
    """
    Private data collection and its access policies.

    Parameters
    ----------
    name
        Collection name.
    read_policy
        MSPs allowed to read entries.
    write_policy
        MSPs allowed to write entries.
    owner_scoped
        MSPs that may only read or write entries they own, i.e. entries first written
        by their own organization. MSPs outside this set are unrestricted within the
        read and write policies.
    """

    name: str
    read_policy: FrozenSet[MspId]
    write_policy: FrozenSet[MspId]
    owner_scoped: FrozenSet[MspId] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "read_policy", _msp_set(self.read_policy))
        object.__setattr__(self, "write_policy", _msp_set(self.write_policy))
        object.__setattr__(self, "owner_scoped", _msp_set(self.owner_scoped))
        if not self.name:
            raise ValueError("collection name must be non-empty")
        if not self.read_policy or not self.write_policy:
            raise ValueError(
                "collection '{}' needs non-empty read and write policies".format(self.name)
            )

    def _owner_ok(self, msp: MspId, owner: Optional[MspId]) -> bool:
        return msp not in self.owner_scoped or owner is None or owner == msp

    def can_read(self, msp: MspId, owner: Optional[MspId] = None) -> bool:
        return msp in self.read_policy and self._owner_ok(msp, owner)

    def can_write(self, msp: MspId, owner: Optional[MspId] = None) -> bool:
        return msp in self.write_policy and self._owner_ok(msp, owner)


class PolicyKind(Enum):
    ANY_OF = "AnyOf"
    M_OF_N = "MOfN"


@dataclass(frozen=True)
class EndorsementPolicy:
    kind: PolicyKind
    members: FrozenSet[MspId]
    threshold: int = 1

    def __post_init__(self):
        object.__setattr__(self, "members", _msp_set(self.members))
        if self.kind is PolicyKind.ANY_OF:
            object.__setattr__(self, "threshold", 1)
        if not 1 <= self.threshold <= len(self.members):
            raise ValueError(
                "threshold {} outside [1, {}]".format(self.threshold, len(self.members))
            )

    @classmethod
    def any_of(cls, members: Iterable[MspId]) -> "EndorsementPolicy":
        return cls(PolicyKind.ANY_OF, frozenset(members))

    @classmethod
    def m_of_n(cls, members: Iterable[MspId], threshold: int) -> "EndorsementPolicy":
        return cls(PolicyKind.M_OF_N, frozenset(members), threshold)

    def is_satisfied_by(self, endorsers: Iterable[MspId]) -> bool:
        return len(self.members.intersection(endorsers)) >= self.threshold


def _as_bytes(value: ArgLike) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not valid chaincode arguments")
    if isinstance(value, int):
        return str(value).encode("utf-8")
    if isinstance(value, str):
        return value.encode("utf-8")
    raise TypeError("unsupported argument type {}".format(type(value).__name__))


@dataclass(frozen=True)
class TransactionProposal:
    """
    Chaincode invocation.

    Parameters
    ----------
    submitter
        Identity signing the proposal.
    function
        Registered chaincode function.
    args
        Public arguments; strings and integers are encoded as UTF-8 text.
    transient
        Private inputs available to the handler only, never persisted.
    endorsers
        MSPs whose peers endorsed the proposal. Defaults to the submitter's MSP.
    """

    submitter: Identity
    function: str
    args: Tuple[bytes, ...] = ()
    transient: Mapping[str, bytes] = field(default_factory=dict)
    endorsers: Optional[FrozenSet[MspId]] = None

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(_as_bytes(a) for a in self.args))
        object.__setattr__(
            self, "transient", {k: bytes(v) for k, v in dict(self.transient).items()}
        )
        if self.endorsers is not None:
            object.__setattr__(self, "endorsers", frozenset(self.endorsers))

    @property
    def endorsing_msps(self) -> FrozenSet[MspId]:
        if self.endorsers is None:
            return frozenset([self.submitter.msp])
        return self.endorsers


@dataclass(frozen=True)
class Event:
    name: str
    payload: bytes
    tx_id: str
    cids: Tuple[str, ...] = ()

    @property
    def reference_bytes(self) -> int:
        return sum(len(c.encode("ascii")) for c in self.cids)


@dataclass(frozen=True)
class WriteEntry:
    key: str
    digest: bytes
    value: bytes

    @classmethod
    def of(cls, key: str, value: bytes) -> "WriteEntry":
        return cls(key, hashlib.sha256(value).digest(), value)


@dataclass(frozen=True)
class PrivateWrite:
    collection: str
    key: str
    digest: bytes


class TxStatus(Enum):
    COMMITTED = "Committed"
    REJECTED = "Rejected"


_STATUS_CODES = {TxStatus.COMMITTED: 0, TxStatus.REJECTED: 1}


@dataclass
class TransactionRecord:
    """
    Outcome of a submitted proposal.

    Committed records are numbered from height 1; rejected records carry height 0 and
    never reach the ledger. ``result`` and ``error`` are in-memory only.
    """

    tx_id: str
    height: int
    submitter_msp: str
    function: str
    public_args: Tuple[bytes, ...]
    write_set: Tuple[WriteEntry, ...]
    private_writes: Tuple[PrivateWrite, ...]
    events: Tuple[Event, ...]
    status: TxStatus
    message: str = ""
    result: Optional[bytes] = field(default=None, compare=False, repr=False)
    error: Optional[BaseException] = field(default=None, compare=False, repr=False)

    @property
    def committed(self) -> bool:
        return self.status is TxStatus.COMMITTED

    def raise_for_status(self) -> "TransactionRecord":
        """Re-raise the rejection cause, if any."""
        if self.committed:
            return self
        if self.error is not None:
            raise self.error
        raise LedgerError(self.message)

    def serialize(self) -> bytes:
        enc = Encoder()
        enc.text(self.tx_id).u64(self.height).text(self.submitter_msp)
        enc.text(self.function).u64(_STATUS_CODES[self.status]).text(self.message)
        enc.u64(len(self.public_args))
        for arg in self.public_args:
            enc.blob(arg)
        enc.u64(len(self.write_set))
        for entry in self.write_set:
            enc.text(entry.key).blob(entry.digest).blob(entry.value)
        enc.u64(len(self.private_writes))
        for pw in self.private_writes:
            enc.text(pw.collection).text(pw.key).blob(pw.digest)
        enc.u64(len(self.events))
        for event in self.events:
            enc.text(event.name).blob(event.payload).text(event.tx_id)
            enc.u64(len(event.cids))
            for cid in event.cids:
                enc.cid(cid)
        return enc.getvalue()

    @classmethod
    def deserialize(cls, data: bytes) -> "TransactionRecord":
        dec = Decoder(data)
        tx_id, height, msp = dec.text(), dec.u64(), dec.text()
        function = dec.text()
        status = {v: k for k, v in _STATUS_CODES.items()}[dec.u64()]
        message = dec.text()
        args = tuple(dec.blob() for _ in range(dec.u64()))
        writes = tuple(
            WriteEntry(dec.text(), dec.blob(), dec.blob()) for _ in range(dec.u64())
        )
        private = tuple(
            PrivateWrite(dec.text(), dec.text(), dec.blob()) for _ in range(dec.u64())
        )
        events = []
        for _ in range(dec.u64()):
            name, payload, ev_tx = dec.text(), dec.blob(), dec.text()
            cids = tuple(dec.cid() for _ in range(dec.u64()))
            events.append(Event(name, payload, ev_tx, cids))
        dec.finish()
        return cls(
            tx_id, height, msp, function, args, writes, private, tuple(events), status, message
        )


@dataclass
class LedgerMetrics:
    committed_tx_count: int = 0
    rejected_tx_count: int = 0
    ledger_bytes: int = 0
    reference_bytes: int = 0
    pdc_bytes_by_collection: Dict[str, int] = field(default_factory=dict)
    reference_bytes_by_event: Dict[str, int] = field(default_factory=dict)
    events_by_name: Dict[str, int] = field(default_factory=dict)
    height: int = 0

    @property
    def pdc_bytes_total(self) -> int:
        return sum(self.pdc_bytes_by_collection.values())

    def copy(self) -> "LedgerMetrics":
        return copy.deepcopy(self)
