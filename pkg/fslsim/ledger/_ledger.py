import fnmatch
import hashlib
import logging
import queue
import threading
from collections import Counter, OrderedDict
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

from ._exceptions import (
    AccessDeniedError,
    ChaincodeError,
    EndorsementError,
    LedgerError,
    MembershipError,
    TransientKeyError,
)
from ._types import (
    EndorsementPolicy,
    Event,
    Identity,
    LedgerMetrics,
    MspId,
    PdcDefinition,
    PrivateWrite,
    Role,
    TransactionProposal,
    TransactionRecord,
    TxStatus,
    WriteEntry,
)

logger = logging.getLogger(__name__)

Handler = Callable[["ChaincodeStub"], Optional[bytes]]


class ChaincodeStub:
    """
    Execution context handed to a chaincode handler.

    Writes are staged and only become durable when the ledger commits the transaction.
    Reads see the staged writes of the same execution first.
    """

    def __init__(
        self,
        ledger: "Ledger",
        proposal: TransactionProposal,
        tx_id: str,
        read_only: bool = False,
    ):
        self._ledger = ledger
        self._proposal = proposal
        self._tx_id = tx_id
        self._read_only = read_only
        self._writes: "OrderedDict[str, bytes]" = OrderedDict()
        self._private: "OrderedDict[Tuple[str, str], Tuple[MspId, bytes]]" = OrderedDict()
        self._events: List[Tuple[str, bytes, Tuple[str, ...]]] = []
        self._closed = False

    def _check_open(self):
        if self._closed:
            raise LedgerError("stub used outside of its handler execution")

    def _check_writable(self):
        self._check_open()
        if self._read_only:
            raise LedgerError("writes are not allowed in a query")

    @property
    def tx_id(self) -> str:
        return self._tx_id

    @property
    def height(self) -> int:
        """Height this transaction commits at, if it commits."""
        return self._ledger.height + 1

    @property
    def creator(self) -> Identity:
        return self._proposal.submitter

    @property
    def function(self) -> str:
        return self._proposal.function

    @property
    def args(self) -> Tuple[bytes, ...]:
        return self._proposal.args

    def get_state(self, key: str) -> Optional[bytes]:
        """Value of ``key``, or ``None`` when absent."""
        self._check_open()
        if key in self._writes:
            return self._writes[key]
        return self._ledger._world.get(key)

    def put_state(self, key: str, value: bytes):
        self._check_writable()
        if not key:
            raise ChaincodeError("empty key")
        self._writes[key] = bytes(value)

    def get_state_by_prefix(self, prefix: str) -> List[Tuple[str, bytes]]:
        """Key-sorted entries whose key starts with ``prefix``."""
        self._check_open()
        merged = {k: v for k, v in self._ledger._world.items() if k.startswith(prefix)}
        merged.update({k: v for k, v in self._writes.items() if k.startswith(prefix)})
        return sorted(merged.items())

    def _private_owner(self, collection: str, key: str) -> Optional[MspId]:
        staged = self._private.get((collection, key))
        if staged is not None:
            return staged[0]
        entry = self._ledger._pdc_entry(collection, key)
        return None if entry is None else entry[0]

    def put_private(self, collection: str, key: str, value: bytes):
        self._check_writable()
        pdc = self._ledger._collection(collection)
        msp = self.creator.msp
        owner = self._private_owner(collection, key)
        if not pdc.can_write(msp, owner):
            raise AccessDeniedError(collection, msp.name, "write")
        self._private[(collection, key)] = (owner or msp, bytes(value))

    def get_private(self, collection: str, key: str) -> Optional[bytes]:
        self._check_open()
        pdc = self._ledger._collection(collection)
        msp = self.creator.msp
        owner = self._private_owner(collection, key)
        if not pdc.can_read(msp, owner):
            raise AccessDeniedError(collection, msp.name, "read")
        staged = self._private.get((collection, key))
        if staged is not None:
            return staged[1]
        entry = self._ledger._pdc_entry(collection, key)
        return None if entry is None else entry[1]

    def get_transient(self, key: str) -> bytes:
        self._check_open()
        try:
            return self._proposal.transient[key]
        except KeyError:
            raise TransientKeyError(key) from None

    def has_transient(self, key: str) -> bool:
        self._check_open()
        return key in self._proposal.transient

    def set_event(self, name: str, payload: bytes, cids: Iterable[str] = ()):
        self._check_writable()
        self._events.append((name, bytes(payload), tuple(cids)))

    def _close(self):
        self._closed = True


class EventStream:
    """
    Ordered feed of committed events matching a name pattern.

    Events arrive in commit order. ``drain`` never blocks.
    """

    def __init__(self, ledger: "Ledger", pattern: str, subscriber: Identity):
        self.pattern = pattern
        self.subscriber = subscriber
        self._ledger = ledger
        self._queue: "queue.Queue[Event]" = queue.Queue()
        self.closed = False

    def matches(self, name: str) -> bool:
        return fnmatch.fnmatchcase(name, self.pattern)

    def _deliver(self, event: Event):
        if not self.closed:
            self._queue.put(event)

    def get(self, timeout: Optional[float] = None) -> Event:
        return self._queue.get(timeout=timeout)

    def drain(self) -> List[Event]:
        events = []
        while True:
            try:
                events.append(self._queue.get_nowait())
            except queue.Empty:
                return events

    def __iter__(self) -> Iterator[Event]:
        return iter(self.drain())

    def __len__(self):
        return self._queue.qsize()

    def close(self):
        self.closed = True
        self._ledger._unsubscribe(self)


class Ledger:
    """
    In-process permissioned ledger with a single total-order sequencer.

    Parameters
    ----------
    channel_config
        Channel members.
    pdcs
        Private data collections.
    policies
        Endorsement policy per chaincode function. Functions without an entry
        need an endorsement from any member.
    channel
        Channel name, mixed into transaction ids.

    Examples
    --------
    >>> ledger = bootstrap_network(msps, collections, policies)
    >>> ledger.register_function("registerClient", handler)
    >>> record = ledger.submit_transaction(proposal)
    >>> record.raise_for_status()
    """

    def __init__(
        self,
        channel_config: Iterable[MspId],
        pdcs: Iterable[PdcDefinition] = (),
        policies: Optional[Mapping[str, EndorsementPolicy]] = None,
        channel: str = "fslchannel",
    ):
        msps = list(channel_config)
        if not msps:
            raise MembershipError("no members")
        self._members: "OrderedDict[str, MspId]" = OrderedDict()
        for msp in msps:
            if msp.name in self._members:
                raise MembershipError("duplicate MSP '{}'".format(msp.name))
            self._members[msp.name] = msp
        roles = Counter(msp.role for msp in msps)
        if roles[Role.CLIENT] < 1:
            raise MembershipError("network needs at least one Client MSP")
        if roles[Role.SERVER_ENTITY] != 1 or roles[Role.ADMIN] != 1:
            raise MembershipError("network needs exactly one Server MSP and one Admin MSP")

        self._collections: Dict[str, PdcDefinition] = OrderedDict()
        for pdc in pdcs:
            if pdc.name in self._collections:
                raise MembershipError("collection exists: '{}'".format(pdc.name))
            unknown = (pdc.read_policy | pdc.write_policy) - set(self._members.values())
            if unknown:
                raise MembershipError(
                    "collection '{}' references non-members {}".format(
                        pdc.name, sorted(m.name for m in unknown)
                    )
                )
            self._collections[pdc.name] = pdc

        self._policies: Dict[str, EndorsementPolicy] = dict(policies or {})
        self._default_policy = EndorsementPolicy.any_of(self._members.values())
        self.channel = channel

        self._functions: Dict[str, Handler] = {}
        self._world: Dict[str, bytes] = {}
        self._pdc: Dict[str, Dict[str, Tuple[MspId, bytes]]] = {
            name: {} for name in self._collections
        }
        self._records: List[TransactionRecord] = []
        self._rejected: List[TransactionRecord] = []
        self._metrics = LedgerMetrics(
            pdc_bytes_by_collection={name: 0 for name in self._collections}
        )
        self._history: List[dict] = []
        self._subscribers: List[EventStream] = []
        self._seq = 0
        self._lock = threading.RLock()
        self._executor: Optional[ThreadPoolExecutor] = None

        logger.info(
            "Bootstrapped channel '{}' with {} members and {} collections.".format(
                channel, len(self._members), len(self._collections)
            )
        )

    # membership and configuration

    @property
    def members(self) -> List[MspId]:
        return list(self._members.values())

    @property
    def collections(self) -> List[PdcDefinition]:
        return list(self._collections.values())

    def msps_with_role(self, role: Role) -> List[MspId]:
        return sorted(m for m in self._members.values() if m.role is role)

    def policy_for(self, function: str) -> EndorsementPolicy:
        return self._policies.get(function, self._default_policy)

    def set_policy(self, function: str, policy: EndorsementPolicy):
        unknown = policy.members - set(self._members.values())
        if unknown:
            raise MembershipError("policy references non-members")
        self._policies[function] = policy

    def register_function(self, name: str, handler: Handler):
        if name in self._functions:
            raise LedgerError("function '{}' already registered".format(name))
        self._functions[name] = handler

    def _collection(self, name: str) -> PdcDefinition:
        try:
            return self._collections[name]
        except KeyError:
            raise LedgerError("unknown collection '{}'".format(name)) from None

    def _pdc_entry(self, collection: str, key: str) -> Optional[Tuple[MspId, bytes]]:
        return self._pdc[collection].get(key)

    def _check_member(self, identity: Identity):
        msp = self._members.get(identity.msp.name)
        if msp is None:
            raise MembershipError("not a channel member: {}".format(identity.msp))
        if msp.role is not identity.role:
            raise MembershipError(
                "identity role {} does not match {} ({})".format(
                    identity.role, msp.name, msp.role
                )
            )

    def _next_tx_id(self, proposal: TransactionProposal) -> str:
        self._seq += 1
        material = "|".join(
            [
                self.channel,
                str(self._seq),
                proposal.submitter.msp.name,
                proposal.submitter.actor_id,
                proposal.function,
            ]
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    # transaction flow

    def submit_transaction(self, proposal: TransactionProposal) -> TransactionRecord:
        """
        Execute, endorse, order and commit a proposal.

        Returns
        -------
        A ``Committed`` record, or a ``Rejected`` one (height 0) carrying the failure
        message. Rejections leave world state, collections and ledger bytes untouched.
        """
        with self._lock:
            tx_id = self._next_tx_id(proposal)
            stub = ChaincodeStub(self, proposal, tx_id)
            try:
                self._check_member(proposal.submitter)
                handler = self._functions.get(proposal.function)
                if handler is None:
                    raise LedgerError("unknown function '{}'".format(proposal.function))
                result = handler(stub)
                if not self.policy_for(proposal.function).is_satisfied_by(
                    proposal.endorsing_msps
                ):
                    raise EndorsementError("endorsement policy unsatisfied")
            except Exception as error:
                stub._close()
                return self._reject(proposal, tx_id, error)
            stub._close()
            return self._commit(proposal, tx_id, stub, result)

    def submit_async(self, proposal: TransactionProposal) -> "Future[TransactionRecord]":
        """Queue a proposal on the ledger's single submission worker."""
        with self._lock:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(
                    max_workers=1, thread_name_prefix="fslsim-orderer"
                )
        return self._executor.submit(self.submit_transaction, proposal)

    def evaluate_transaction(self, proposal: TransactionProposal) -> Optional[bytes]:
        """Run a read-only query. Errors are raised, nothing is recorded."""
        with self._lock:
            self._check_member(proposal.submitter)
            handler = self._functions.get(proposal.function)
            if handler is None:
                raise LedgerError("unknown function '{}'".format(proposal.function))
            stub = ChaincodeStub(self, proposal, tx_id="", read_only=True)
            try:
                return handler(stub)
            finally:
                stub._close()

    def _reject(
        self, proposal: TransactionProposal, tx_id: str, error: Exception
    ) -> TransactionRecord:
        record = TransactionRecord(
            tx_id=tx_id,
            height=0,
            submitter_msp=proposal.submitter.msp.name,
            function=proposal.function,
            public_args=proposal.args,
            write_set=(),
            private_writes=(),
            events=(),
            status=TxStatus.REJECTED,
            message=str(error),
            error=error,
        )
        self._rejected.append(record)
        self._metrics.rejected_tx_count += 1
        logger.warning(
            "Rejected {} from {}: {}".format(proposal.function, proposal.submitter, error)
        )
        return record

    def _commit(
        self,
        proposal: TransactionProposal,
        tx_id: str,
        stub: ChaincodeStub,
        result: Optional[bytes],
    ) -> TransactionRecord:
        height = len(self._records) + 1
        write_set = tuple(WriteEntry.of(k, v) for k, v in stub._writes.items())
        private_writes = tuple(
            PrivateWrite(collection, key, hashlib.sha256(value).digest())
            for (collection, key), (_, value) in stub._private.items()
        )
        events = tuple(
            Event(name, payload, tx_id, cids) for name, payload, cids in stub._events
        )
        record = TransactionRecord(
            tx_id=tx_id,
            height=height,
            submitter_msp=proposal.submitter.msp.name,
            function=proposal.function,
            public_args=proposal.args,
            write_set=write_set,
            private_writes=private_writes,
            events=events,
            status=TxStatus.COMMITTED,
            result=result,
        )
        size = len(record.serialize())

        self._world.update(stub._writes)
        metrics = self._metrics
        for (collection, key), entry in stub._private.items():
            self._pdc[collection][key] = entry
            metrics.pdc_bytes_by_collection[collection] += len(key.encode("utf-8")) + len(
                entry[1]
            )
        self._records.append(record)
        metrics.committed_tx_count += 1
        metrics.height = height
        metrics.ledger_bytes += size
        for event in events:
            metrics.reference_bytes += event.reference_bytes
            metrics.reference_bytes_by_event[event.name] = (
                metrics.reference_bytes_by_event.get(event.name, 0) + event.reference_bytes
            )
            metrics.events_by_name[event.name] = metrics.events_by_name.get(event.name, 0) + 1
        self._history.append(
            dict(
                height=height,
                tx_count=metrics.committed_tx_count,
                ledger_bytes=metrics.ledger_bytes,
                reference_bytes=metrics.reference_bytes,
                pdc_bytes_total=metrics.pdc_bytes_total,
            )
        )
        logger.debug(
            "Committed {} at height {} ({} bytes, {} events).".format(
                proposal.function, height, size, len(events)
            )
        )
        for event in events:
            for stream in list(self._subscribers):
                if stream.matches(event.name):
                    stream._deliver(event)
        return record

    # events

    def subscribe(self, event_name_pattern: str, subscriber: Identity) -> EventStream:
        """
        Stream of events committed after this call whose name matches a glob pattern.
        """
        with self._lock:
            self._check_member(subscriber)
            stream = EventStream(self, event_name_pattern, subscriber)
            self._subscribers.append(stream)
            return stream

    def _unsubscribe(self, stream: EventStream):
        with self._lock:
            if stream in self._subscribers:
                self._subscribers.remove(stream)

    # inspection

    def metrics(self) -> LedgerMetrics:
        with self._lock:
            return self._metrics.copy()

    def metrics_history(self) -> List[dict]:
        with self._lock:
            return [dict(row) for row in self._history]

    @property
    def height(self) -> int:
        return len(self._records)

    @property
    def records(self) -> List[TransactionRecord]:
        with self._lock:
            return list(self._records)

    @property
    def rejected(self) -> List[TransactionRecord]:
        with self._lock:
            return list(self._rejected)

    def world_state(self) -> Dict[str, bytes]:
        with self._lock:
            return dict(self._world)

    def read_private(
        self, collection: str, key: str, caller: Identity
    ) -> Optional[bytes]:
        """Read a collection entry outside a transaction, under the read policy."""
        with self._lock:
            self._check_member(caller)
            pdc = self._collection(collection)
            entry = self._pdc_entry(collection, key)
            owner = None if entry is None else entry[0]
            if not pdc.can_read(caller.msp, owner):
                logger.warning(
                    "Denied read of '{}' in {} by {}.".format(key, collection, caller)
                )
                raise AccessDeniedError(collection, caller.msp.name, "read")
            return None if entry is None else entry[1]

    def private_values(self, collection: str) -> Dict[str, bytes]:
        """Raw collection contents, for audits run by the network operator."""
        with self._lock:
            self._collection(collection)
            return {k: v for k, (_, v) in self._pdc[collection].items()}

    @staticmethod
    def replay(records: Iterable[TransactionRecord]) -> Dict[str, bytes]:
        """World state obtained by applying committed write sets in height order."""
        state: Dict[str, bytes] = {}
        expected = 1
        for record in sorted(records, key=lambda r: r.height):
            if not record.committed:
                continue
            if record.height != expected:
                raise LedgerError(
                    "height gap: expected {}, found {}".format(expected, record.height)
                )
            for entry in record.write_set:
                if hashlib.sha256(entry.value).digest() != entry.digest:
                    raise LedgerError("digest mismatch for key '{}'".format(entry.key))
                state[entry.key] = entry.value
            expected += 1
        return state

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None


def bootstrap_network(
    channel_config: Iterable[MspId],
    pdcs: Iterable[PdcDefinition],
    policies: Optional[Mapping[str, EndorsementPolicy]] = None,
    channel: str = "fslchannel",
) -> Ledger:
    """
    Create a ledger for a fixed channel membership.

    Parameters
    ----------
    channel_config
        Members: at least one Client MSP, exactly one Server MSP and one Admin MSP.
    pdcs
        Private data collections; names must be unique.
    policies
        Endorsement policy per function.

    Returns
    -------
    An empty :class:`Ledger` with zeroed metrics.
    """
    return Ledger(channel_config, pdcs, policies, channel=channel)
