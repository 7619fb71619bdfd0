"""Records kept by the FSL chaincode, with their canonical byte encodings."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from fslsim.ledger._codec import Decoder, Encoder
from fslsim.store import Cid


class IntermediateKind(Enum):
    ACTIVATION = "activation"
    GRADIENT = "gradient"


class TaskStatus(Enum):
    OPEN = "Open"
    COMMITTED = "Committed"
    FAILED = "Failed"


def _optional_cid(dec: Decoder) -> Optional[Cid]:
    return Cid(dec.cid()) if dec.u64() else None


def _put_optional_cid(enc: Encoder, cid: Optional[str]):
    enc.u64(1 if cid else 0)
    if cid:
        enc.cid(cid)


@dataclass(frozen=True)
class ServerRecord:
    server_id: str
    msp: str
    capabilities: str = ""

    def to_bytes(self) -> bytes:
        return Encoder().text(self.server_id).text(self.msp).text(self.capabilities).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ServerRecord":
        dec = Decoder(data)
        record = cls(dec.text(), dec.text(), dec.text())
        dec.finish()
        return record


@dataclass(frozen=True)
class ClientRecord:
    client_id: str
    msp: str
    dataset_size: int

    def to_bytes(self) -> bytes:
        return Encoder().text(self.client_id).text(self.msp).u64(self.dataset_size).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClientRecord":
        dec = Decoder(data)
        record = cls(dec.text(), dec.text(), dec.u64())
        dec.finish()
        return record


@dataclass(frozen=True)
class ModelMeta:
    """
    Published split model.

    ``genesis_hash`` references the initial client-side parameters every client
    starts from, when the publisher supplied them.
    """

    model_id: str
    fc_spec_hash: Cid
    fs_spec_hash: Cid
    split_point_label: str
    publisher_msp: str
    publisher_id: str
    genesis_hash: Optional[Cid] = None

    def to_bytes(self) -> bytes:
        enc = Encoder().text(self.model_id).cid(self.fc_spec_hash).cid(self.fs_spec_hash)
        enc.text(self.split_point_label).text(self.publisher_msp).text(self.publisher_id)
        _put_optional_cid(enc, self.genesis_hash)
        return enc.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelMeta":
        dec = Decoder(data)
        record = cls(
            dec.text(),
            Cid(dec.cid()),
            Cid(dec.cid()),
            dec.text(),
            dec.text(),
            dec.text(),
            _optional_cid(dec),
        )
        dec.finish()
        return record


@dataclass(frozen=True)
class IntermediateRef:
    """
    Reference to an activation or gradient blob for one client and round.

    The main ledger keeps everything but ``data_hash``, which lives in the
    intermediate data collection.
    """

    round_id: int
    client_id: str
    data_hash: Cid
    kind: IntermediateKind
    metadata: str = ""

    def meta_bytes(self) -> bytes:
        return (
            Encoder()
            .u64(self.round_id)
            .text(self.client_id)
            .text(self.kind.value)
            .text(self.metadata)
            .getvalue()
        )

    @classmethod
    def from_meta_bytes(cls, data: bytes, data_hash: Cid) -> "IntermediateRef":
        dec = Decoder(data)
        round_id, client_id = dec.u64(), dec.text()
        kind, metadata = IntermediateKind(dec.text()), dec.text()
        dec.finish()
        return cls(round_id, client_id, data_hash, kind, metadata)

    def to_bytes(self) -> bytes:
        return Encoder().cid(self.data_hash).blob(self.meta_bytes()).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IntermediateRef":
        dec = Decoder(data)
        data_hash = Cid(dec.cid())
        meta = dec.blob()
        dec.finish()
        return cls.from_meta_bytes(meta, data_hash)


@dataclass(frozen=True)
class IntermediateNotice:
    """Payload of ``IntermediateDataAdded`` and ``GradientAdded`` events."""

    data_hash: Cid
    round_id: int
    client_id: str
    tx_id: str

    def to_bytes(self) -> bytes:
        return (
            Encoder()
            .cid(self.data_hash)
            .u64(self.round_id)
            .text(self.client_id)
            .text(self.tx_id)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "IntermediateNotice":
        dec = Decoder(data)
        notice = cls(Cid(dec.cid()), dec.u64(), dec.text(), dec.text())
        dec.finish()
        return notice


@dataclass(frozen=True)
class ClientModelHashRecord:
    round_id: int
    aggregation_id: str
    client_id: str
    param_hash: Cid
    dataset_size: int
    metadata: str = ""

    def ledger_bytes(self) -> bytes:
        """Main-ledger reference; the hash itself stays in the private collection."""
        return (
            Encoder()
            .u64(self.round_id)
            .text(self.aggregation_id)
            .text(self.client_id)
            .u64(self.dataset_size)
            .text(self.metadata)
            .getvalue()
        )

    @classmethod
    def from_ledger_bytes(cls, data: bytes, param_hash: Cid) -> "ClientModelHashRecord":
        dec = Decoder(data)
        round_id, aggregation_id, client_id = dec.u64(), dec.text(), dec.text()
        dataset_size, metadata = dec.u64(), dec.text()
        dec.finish()
        return cls(round_id, aggregation_id, client_id, param_hash, dataset_size, metadata)

    def to_bytes(self) -> bytes:
        return Encoder().cid(self.param_hash).blob(self.ledger_bytes()).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClientModelHashRecord":
        dec = Decoder(data)
        param_hash = Cid(dec.cid())
        ref = dec.blob()
        dec.finish()
        return cls.from_ledger_bytes(ref, param_hash)


@dataclass(frozen=True)
class MemberHash:
    client_id: str
    param_hash: Cid
    dataset_size: int


def encode_member_hashes(
    aggregation_id: str, round_id: int, members: Tuple[MemberHash, ...]
) -> bytes:
    """Canonical payload of ``AggregationTaskStart`` and of the matching query."""
    enc = Encoder().text(aggregation_id).u64(round_id).u64(len(members))
    for m in members:
        enc.text(m.client_id).cid(m.param_hash).u64(m.dataset_size)
    return enc.getvalue()


def decode_member_hashes(data: bytes) -> Tuple[str, int, Tuple[MemberHash, ...]]:
    dec = Decoder(data)
    aggregation_id, round_id = dec.text(), dec.u64()
    members = tuple(
        MemberHash(dec.text(), Cid(dec.cid()), dec.u64()) for _ in range(dec.u64())
    )
    dec.finish()
    return aggregation_id, round_id, members


@dataclass
class AggregationTask:
    aggregation_id: str
    round_id: int
    member_hashes: Tuple[MemberHash, ...]
    submissions: Dict[str, Cid] = field(default_factory=dict)
    status: TaskStatus = TaskStatus.OPEN
    global_hash: Optional[Cid] = None

    @property
    def participants(self) -> List[str]:
        return [m.client_id for m in self.member_hashes]

    def to_bytes(self) -> bytes:
        enc = Encoder()
        enc.blob(encode_member_hashes(self.aggregation_id, self.round_id, self.member_hashes))
        enc.u64(len(self.submissions))
        for client_id in sorted(self.submissions):
            enc.text(client_id).cid(self.submissions[client_id])
        enc.text(self.status.value)
        _put_optional_cid(enc, self.global_hash)
        return enc.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AggregationTask":
        dec = Decoder(data)
        aggregation_id, round_id, members = decode_member_hashes(dec.blob())
        submissions = {dec.text(): Cid(dec.cid()) for _ in range(dec.u64())}
        status = TaskStatus(dec.text())
        global_hash = _optional_cid(dec)
        dec.finish()
        return cls(aggregation_id, round_id, members, submissions, status, global_hash)


@dataclass(frozen=True)
class GlobalModelRecord:
    round_id: int
    global_hash: Cid
    committed_at_height: int
    aggregation_id: str = ""

    def to_bytes(self) -> bytes:
        return (
            Encoder()
            .u64(self.round_id)
            .cid(self.global_hash)
            .u64(self.committed_at_height)
            .text(self.aggregation_id)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "GlobalModelRecord":
        dec = Decoder(data)
        record = cls(dec.u64(), Cid(dec.cid()), dec.u64(), dec.text())
        dec.finish()
        return record
