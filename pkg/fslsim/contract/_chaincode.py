import inspect
import logging
import math
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from fslsim import _CONSTANTS
from fslsim.ledger import (
    ChaincodeError,
    ChaincodeStub,
    EndorsementPolicy,
    Ledger,
    MspId,
    PdcDefinition,
    Role,
    TransientKeyError,
)
from fslsim.store import Cid, OffchainStore

from ._records import (
    AggregationTask,
    ClientModelHashRecord,
    ClientRecord,
    GlobalModelRecord,
    IntermediateKind,
    IntermediateNotice,
    IntermediateRef,
    MemberHash,
    ModelMeta,
    ServerRecord,
    TaskStatus,
    encode_member_hashes,
)

logger = logging.getLogger(__name__)

DEFAULT_CONSENSUS = Fraction(2, 3)


def consensus_reached(
    count: int, participants: int, fraction: Union[Fraction, float] = DEFAULT_CONSENSUS
) -> bool:
    """``count`` identical submissions are strictly more than ``fraction`` of participants."""
    fraction = Fraction(fraction).limit_denominator(10 ** 6)
    if participants <= 0:
        return False
    return count * fraction.denominator > fraction.numerator * participants


def endorsement_quorum(n_clients: int) -> int:
    return max(1, math.ceil(2 * n_clients / 3))


def fsl_collections(msps: Iterable[MspId]) -> List[PdcDefinition]:
    """
    The three private data collections of the FSL network.

    * intermediate data hashes: every organization reads, clients and server write;
    * client model hashes: only the submitting client org and the admin org;
    * global model hashes: clients and admin.
    """
    msps = list(msps)
    clients = frozenset(m for m in msps if m.role is Role.CLIENT)
    server = frozenset(m for m in msps if m.role is Role.SERVER_ENTITY)
    admin = frozenset(m for m in msps if m.role is Role.ADMIN)
    return [
        PdcDefinition(
            _CONSTANTS.INTERMEDIATE_COLLECTION,
            read_policy=clients | server | admin,
            write_policy=clients | server,
        ),
        PdcDefinition(
            _CONSTANTS.CLIENT_MODEL_COLLECTION,
            read_policy=clients | admin,
            write_policy=clients,
            owner_scoped=clients,
        ),
        PdcDefinition(
            _CONSTANTS.GLOBAL_MODEL_COLLECTION,
            read_policy=clients | admin,
            write_policy=clients,
        ),
    ]


def fsl_policies(msps: Iterable[MspId]) -> Dict[str, EndorsementPolicy]:
    clients = [m for m in msps if m.role is Role.CLIENT]
    return {
        "commitGlobalModelHash": EndorsementPolicy.any_of(clients),
        "endGlobalModel": EndorsementPolicy.m_of_n(
            clients, endorsement_quorum(len(clients))
        ),
    }


KEY_SEPARATOR = "/"


def _key(*parts) -> str:
    return KEY_SEPARATOR.join(str(p) for p in parts)


class FSLContract:
    """
    Chaincode orchestrating federated split learning.

    Parameters
    ----------
    store
        Off-chain store the peers resolve references against.
    consensus_fraction
        Share of participants that must submit the same global hash, exclusive.

    Examples
    --------
    >>> contract = FSLContract(store)
    >>> contract.install(ledger)
    """

    #: function name -> roles allowed to invoke it; ``None`` means any member
    ROLES: Dict[str, Optional[FrozenSet[Role]]] = {
        "registerServer": frozenset([Role.SERVER_ENTITY]),
        "registerClient": frozenset([Role.CLIENT]),
        "publishModel": frozenset([Role.CLIENT, Role.ADMIN]),
        "getAvailableModels": None,
        "getModel": None,
        "addIntermediateData": frozenset([Role.CLIENT]),
        "addGradients": frozenset([Role.SERVER_ENTITY]),
        "getIntermediateDataHash": None,
        "submitClientModelHash": frozenset([Role.CLIENT]),
        "triggerClientAggregation": frozenset([Role.ADMIN]),
        "queryClientModelHashesForAggregation": frozenset([Role.CLIENT, Role.ADMIN]),
        "commitGlobalModelHash": frozenset([Role.CLIENT]),
        "endGlobalModel": frozenset([Role.CLIENT]),
        "getCurrentGlobalModel": None,
        "getAggregationTask": None,
    }

    QUERIES = frozenset(
        [
            "getAvailableModels",
            "getModel",
            "getIntermediateDataHash",
            "queryClientModelHashesForAggregation",
            "getCurrentGlobalModel",
            "getAggregationTask",
        ]
    )

    def __init__(
        self,
        store: OffchainStore,
        consensus_fraction: Union[Fraction, float] = DEFAULT_CONSENSUS,
    ):
        fraction = Fraction(consensus_fraction).limit_denominator(10 ** 6)
        if not 0 <= fraction < 1:
            raise ValueError("consensus_fraction must be in [0, 1)")
        self.store = store
        self.consensus_fraction = fraction

    def install(self, ledger: Ledger):
        for name in self.ROLES:
            ledger.register_function(name, self._dispatch(name))

    def _dispatch(self, name: str) -> Callable[[ChaincodeStub], Optional[bytes]]:
        method = getattr(self, name)
        signature = inspect.signature(method)
        allowed = self.ROLES[name]

        def handler(stub: ChaincodeStub) -> Optional[bytes]:
            if allowed is not None and stub.creator.role not in allowed:
                raise ChaincodeError(
                    "role mismatch: {} may not call {}".format(stub.creator.role, name)
                )
            try:
                signature.bind(stub, *stub.args)
            except TypeError:
                raise ChaincodeError(
                    "wrong number of arguments for {}: {}".format(name, len(stub.args))
                ) from None
            return method(stub, *stub.args)

        handler.__name__ = name
        return handler

    # helpers

    @staticmethod
    def _text(value: bytes, name: str) -> str:
        try:
            text = value.decode("utf-8")
        except UnicodeDecodeError:
            raise ChaincodeError("{} is not valid UTF-8".format(name)) from None
        if not text:
            raise ChaincodeError("{} must be non-empty".format(name))
        if KEY_SEPARATOR in text:
            raise ChaincodeError("{} may not contain '{}'".format(name, KEY_SEPARATOR))
        return text

    @staticmethod
    def _int(value: bytes, name: str) -> int:
        try:
            number = int(value.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise ChaincodeError("{} must be an integer".format(name)) from None
        if number < 0:
            raise ChaincodeError("{} must be non-negative".format(name))
        return number

    @staticmethod
    def _cid(value: bytes, name: str) -> Cid:
        if not Cid.is_valid(value):
            raise ChaincodeError("{} is not a valid cid".format(name))
        return Cid(value.decode("ascii"))

    def _resolvable(self, cid: Cid):
        if cid not in self.store:
            raise ChaincodeError("dangling reference: {}".format(cid))

    def _calling_client(self, stub: ChaincodeStub) -> ClientRecord:
        raw = stub.get_state(_key("client", stub.creator.actor_id))
        if raw is None:
            raise ChaincodeError("client '{}' is not registered".format(stub.creator.actor_id))
        record = ClientRecord.from_bytes(raw)
        if record.msp != stub.creator.msp.name:
            raise ChaincodeError("client '{}' belongs to {}".format(record.client_id, record.msp))
        return record

    def _verify_transient(self, stub: ChaincodeStub, expected: Cid):
        """The transient payload (raw bytes or a cid) must reference ``expected``."""
        if stub.has_transient(_CONSTANTS.TRANSIENT_DATA_KEY):
            data = stub.get_transient(_CONSTANTS.TRANSIENT_DATA_KEY)
            if Cid.of(data) != expected:
                raise ChaincodeError("hash verification failed")
            return
        if stub.has_transient(_CONSTANTS.TRANSIENT_CID_KEY):
            cid = stub.get_transient(_CONSTANTS.TRANSIENT_CID_KEY)
            if cid != bytes(expected):
                raise ChaincodeError("hash verification failed")
            self._resolvable(expected)
            return
        raise TransientKeyError(_CONSTANTS.TRANSIENT_DATA_KEY)

    def _load_task(self, stub: ChaincodeStub, aggregation_id: str) -> AggregationTask:
        raw = stub.get_state(_key("agg", aggregation_id))
        if raw is None:
            raise ChaincodeError("unknown aggregation '{}'".format(aggregation_id))
        return AggregationTask.from_bytes(raw)

    # registry

    def registerServer(self, stub: ChaincodeStub, server_id: bytes, capabilities: bytes = b""):
        server_id = self._text(server_id, "server_id")
        key = _key("server", server_id)
        if stub.get_state(key) is not None:
            raise ChaincodeError("server '{}' exists".format(server_id))
        record = ServerRecord(server_id, stub.creator.msp.name, capabilities.decode("utf-8"))
        stub.put_state(key, record.to_bytes())
        return record.to_bytes()

    def registerClient(self, stub: ChaincodeStub, client_id: bytes, dataset_size: bytes):
        client_id = self._text(client_id, "client_id")
        size = self._int(dataset_size, "dataset_size")
        if size == 0:
            raise ChaincodeError("empty dataset")
        if client_id != stub.creator.actor_id:
            raise ChaincodeError("identity mismatch: cannot register '{}'".format(client_id))
        key = _key("client", client_id)
        if stub.get_state(key) is not None:
            raise ChaincodeError("client '{}' exists".format(client_id))
        record = ClientRecord(client_id, stub.creator.msp.name, size)
        stub.put_state(key, record.to_bytes())
        return record.to_bytes()

    def publishModel(
        self,
        stub: ChaincodeStub,
        model_id: bytes,
        fc_spec_hash: bytes,
        fs_spec_hash: bytes,
        split_point_label: bytes,
        genesis_hash: bytes = b"",
    ):
        model_id = self._text(model_id, "model_id")
        fc = self._cid(fc_spec_hash, "fc_spec_hash")
        fs = self._cid(fs_spec_hash, "fs_spec_hash")
        genesis = self._cid(genesis_hash, "genesis_hash") if genesis_hash else None
        for cid in filter(None, (fc, fs, genesis)):
            self._resolvable(cid)
        key = _key("model", model_id)
        if stub.get_state(key) is not None:
            raise ChaincodeError("model '{}' exists".format(model_id))
        meta = ModelMeta(
            model_id,
            fc,
            fs,
            split_point_label.decode("utf-8"),
            stub.creator.msp.name,
            stub.creator.actor_id,
            genesis,
        )
        stub.put_state(key, meta.to_bytes())
        if genesis is not None and stub.get_state(_CONSTANTS.GLOBAL_CURRENT_KEY) is None:
            record = GlobalModelRecord(0, genesis, stub.height, "genesis")
            stub.put_state(_CONSTANTS.GLOBAL_CURRENT_KEY, record.to_bytes())
        cids = tuple(filter(None, (fc, fs, genesis)))
        stub.set_event(_CONSTANTS.MODEL_PUBLISHED, meta.to_bytes(), cids)
        return meta.to_bytes()

    def getAvailableModels(self, stub: ChaincodeStub):
        entries = stub.get_state_by_prefix("model/")
        models = [ModelMeta.from_bytes(v) for _, v in entries]
        models.sort(key=lambda m: m.model_id)
        return b"".join(len(m.to_bytes()).to_bytes(8, "little") + m.to_bytes() for m in models)

    def getModel(self, stub: ChaincodeStub, model_id: bytes):
        model_id = self._text(model_id, "model_id")
        raw = stub.get_state(_key("model", model_id))
        if raw is None:
            raise ChaincodeError("unknown model '{}'".format(model_id))
        return raw

    # split learning exchange

    def addIntermediateData(
        self, stub: ChaincodeStub, round_id: bytes, data_hash: bytes, metadata: bytes = b""
    ):
        round_id = self._int(round_id, "round_id")
        data_hash = self._cid(data_hash, "data_hash")
        client = self._calling_client(stub)
        return self._add_reference(
            stub, round_id, client.client_id, data_hash, IntermediateKind.ACTIVATION, metadata
        )

    def addGradients(
        self,
        stub: ChaincodeStub,
        client_id: bytes,
        round_id: bytes,
        grad_hash: bytes,
        metadata: bytes = b"",
    ):
        client_id = self._text(client_id, "client_id")
        round_id = self._int(round_id, "round_id")
        grad_hash = self._cid(grad_hash, "grad_hash")
        if stub.get_state(_key("ref", round_id, client_id, _CONSTANTS.ACTIVATION)) is None:
            raise ChaincodeError(
                "no pending activation for round {} client '{}'".format(round_id, client_id)
            )
        return self._add_reference(
            stub, round_id, client_id, grad_hash, IntermediateKind.GRADIENT, metadata
        )

    def _add_reference(
        self,
        stub: ChaincodeStub,
        round_id: int,
        client_id: str,
        data_hash: Cid,
        kind: IntermediateKind,
        metadata: bytes,
    ) -> bytes:
        self._verify_transient(stub, data_hash)
        key = _key("ref", round_id, client_id, kind.value)
        if stub.get_state(key) is not None:
            raise ChaincodeError(
                "{} for round {} client '{}' exists".format(kind.value, round_id, client_id)
            )
        ref = IntermediateRef(round_id, client_id, data_hash, kind, metadata.decode("utf-8"))
        stub.put_private(_CONSTANTS.INTERMEDIATE_COLLECTION, key, bytes(data_hash))
        stub.put_state(key, ref.meta_bytes())
        event = (
            _CONSTANTS.INTERMEDIATE_ADDED
            if kind is IntermediateKind.ACTIVATION
            else _CONSTANTS.GRADIENT_ADDED
        )
        notice = IntermediateNotice(data_hash, round_id, client_id, stub.tx_id)
        stub.set_event(event, notice.to_bytes(), (data_hash,))
        return ref.to_bytes()

    def getIntermediateDataHash(
        self, stub: ChaincodeStub, round_id: bytes, client_id: bytes, kind: bytes
    ):
        round_id = self._int(round_id, "round_id")
        client_id = self._text(client_id, "client_id")
        try:
            kind = IntermediateKind(kind.decode("utf-8"))
        except ValueError:
            raise ChaincodeError("unknown kind {!r}".format(kind)) from None
        key = _key("ref", round_id, client_id, kind.value)
        meta = stub.get_state(key)
        data_hash = stub.get_private(_CONSTANTS.INTERMEDIATE_COLLECTION, key)
        if meta is None or data_hash is None:
            raise ChaincodeError(
                "no {} for round {} client '{}'".format(kind.value, round_id, client_id)
            )
        return IntermediateRef.from_meta_bytes(meta, Cid(data_hash.decode("ascii"))).to_bytes()

    # client-led aggregation

    def submitClientModelHash(
        self,
        stub: ChaincodeStub,
        round_id: bytes,
        aggregation_id: bytes,
        param_hash: bytes,
        metadata: bytes = b"",
    ):
        round_id = self._int(round_id, "round_id")
        aggregation_id = self._text(aggregation_id, "aggregation_id")
        param_hash = self._cid(param_hash, "param_hash")
        client = self._calling_client(stub)
        self._resolvable(param_hash)
        if stub.get_state(_key("agg", aggregation_id)) is not None:
            raise ChaincodeError("task open for aggregation '{}'".format(aggregation_id))
        key = _key("agg", aggregation_id, client.client_id)
        if stub.get_state(key) is not None:
            raise ChaincodeError(
                "already submitted: '{}' in '{}'".format(client.client_id, aggregation_id)
            )
        record = ClientModelHashRecord(
            round_id,
            aggregation_id,
            client.client_id,
            param_hash,
            client.dataset_size,
            metadata.decode("utf-8"),
        )
        stub.put_private(_CONSTANTS.CLIENT_MODEL_COLLECTION, key, bytes(param_hash))
        stub.put_state(key, record.ledger_bytes())
        return record.to_bytes()

    def triggerClientAggregation(self, stub: ChaincodeStub, aggregation_id: bytes):
        aggregation_id = self._text(aggregation_id, "aggregation_id")
        if stub.get_state(_key("agg", aggregation_id)) is not None:
            raise ChaincodeError("task open for aggregation '{}'".format(aggregation_id))
        members: List[MemberHash] = []
        rounds = set()
        for key, value in stub.get_state_by_prefix(_key("agg", aggregation_id, "")):
            param_hash = stub.get_private(_CONSTANTS.CLIENT_MODEL_COLLECTION, key)
            record = ClientModelHashRecord.from_ledger_bytes(
                value, Cid(param_hash.decode("ascii"))
            )
            rounds.add(record.round_id)
            members.append(MemberHash(record.client_id, record.param_hash, record.dataset_size))
        if not members:
            raise ChaincodeError("nothing to aggregate for '{}'".format(aggregation_id))
        if len(rounds) != 1:
            raise ChaincodeError("submissions for '{}' span several rounds".format(aggregation_id))
        members.sort(key=lambda m: m.client_id)
        task = AggregationTask(aggregation_id, rounds.pop(), tuple(members))
        stub.put_state(_key("agg", aggregation_id), task.to_bytes())
        payload = encode_member_hashes(aggregation_id, task.round_id, task.member_hashes)
        stub.set_event(
            _CONSTANTS.AGGREGATION_START, payload, tuple(m.param_hash for m in members)
        )
        logger.debug(
            "Opened aggregation '{}' with {} members".format(aggregation_id, len(members))
        )
        return payload

    def queryClientModelHashesForAggregation(self, stub: ChaincodeStub, aggregation_id: bytes):
        task = self._load_task(stub, self._text(aggregation_id, "aggregation_id"))
        return encode_member_hashes(task.aggregation_id, task.round_id, task.member_hashes)

    def getAggregationTask(self, stub: ChaincodeStub, aggregation_id: bytes):
        return self._load_task(stub, self._text(aggregation_id, "aggregation_id")).to_bytes()

    def commitGlobalModelHash(
        self, stub: ChaincodeStub, aggregation_id: bytes, round_id: bytes, global_hash: bytes
    ):
        aggregation_id = self._text(aggregation_id, "aggregation_id")
        round_id = self._int(round_id, "round_id")
        global_hash = self._cid(global_hash, "global_hash")
        client = self._calling_client(stub)
        task = self._load_task(stub, aggregation_id)
        if task.status is not TaskStatus.OPEN:
            raise ChaincodeError(
                "task closed: '{}' is {}".format(aggregation_id, task.status.value)
            )
        if task.round_id != round_id:
            raise ChaincodeError("round mismatch: task is round {}".format(task.round_id))
        if client.client_id not in task.participants:
            raise ChaincodeError("'{}' is not a participant".format(client.client_id))
        if client.client_id in task.submissions:
            raise ChaincodeError("already submitted: '{}'".format(client.client_id))
        task.submissions[client.client_id] = global_hash
        stub.put_state(_key("agg", aggregation_id), task.to_bytes())
        return None

    def endGlobalModel(self, stub: ChaincodeStub, aggregation_id: bytes, round_id: bytes):
        aggregation_id = self._text(aggregation_id, "aggregation_id")
        round_id = self._int(round_id, "round_id")
        task = self._load_task(stub, aggregation_id)
        if task.status is not TaskStatus.OPEN:
            raise ChaincodeError(
                "task closed: '{}' is {}".format(aggregation_id, task.status.value)
            )
        if task.round_id != round_id:
            raise ChaincodeError("round mismatch: task is round {}".format(task.round_id))

        participants = len(task.member_hashes)
        winner, count = self._plurality(task.submissions.values())
        if winner is not None and consensus_reached(count, participants, self.consensus_fraction):
            height = stub.height
            record = GlobalModelRecord(round_id, winner, height, aggregation_id)
            task.status = TaskStatus.COMMITTED
            task.global_hash = winner
            stub.put_private(
                _CONSTANTS.GLOBAL_MODEL_COLLECTION, _key("agg", aggregation_id), bytes(winner)
            )
            stub.put_state(_CONSTANTS.GLOBAL_CURRENT_KEY, record.to_bytes())
            stub.put_state(_key("agg", aggregation_id), task.to_bytes())
            stub.set_event(_CONSTANTS.GLOBAL_MODEL_UPDATED, record.to_bytes(), (winner,))
            logger.info(
                "Aggregation '{}' committed with {}/{} identical submissions.".format(
                    aggregation_id, count, participants
                )
            )
            return record.to_bytes()

        task.status = TaskStatus.FAILED
        stub.put_state(_key("agg", aggregation_id), task.to_bytes())
        payload = task.to_bytes()
        stub.set_event(_CONSTANTS.AGGREGATION_FAILED, payload)
        logger.warning(
            "Aggregation '{}' failed: {}/{} identical submissions.".format(
                aggregation_id, count, participants
            )
        )
        return b""

    @staticmethod
    def _plurality(submissions: Iterable[Cid]) -> Tuple[Optional[Cid], int]:
        counts: Dict[Cid, int] = {}
        for cid in submissions:
            counts[cid] = counts.get(cid, 0) + 1
        if not counts:
            return None, 0
        winner = min(counts, key=lambda c: (-counts[c], c))
        return winner, counts[winner]

    def getCurrentGlobalModel(self, stub: ChaincodeStub):
        raw = stub.get_state(_CONSTANTS.GLOBAL_CURRENT_KEY)
        if raw is None:
            raise ChaincodeError("no global model published")
        return raw
