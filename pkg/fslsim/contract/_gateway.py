import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from fslsim._utils import client_ids
from fslsim.ledger import (
    Identity,
    Ledger,
    MspId,
    Role,
    TransactionProposal,
    TransactionRecord,
    bootstrap_network,
)
from fslsim.store import Cid, OffchainStore

from ._chaincode import DEFAULT_CONSENSUS, FSLContract, fsl_collections, fsl_policies
from ._records import (
    AggregationTask,
    GlobalModelRecord,
    IntermediateKind,
    IntermediateRef,
    MemberHash,
    ModelMeta,
    decode_member_hashes,
)

logger = logging.getLogger(__name__)


class FSLGateway:
    """
    Typed client for the FSL chaincode, bound to one identity.

    Submitting methods return the :class:`~fslsim.ledger.TransactionRecord`; call
    ``raise_for_status`` on it to turn a rejection into an exception. Queries raise
    directly.
    """

    def __init__(self, ledger: Ledger, identity: Identity):
        self.ledger = ledger
        self.identity = identity

    def _proposal(self, function, args=(), transient=None, endorsers=None):
        return TransactionProposal(
            self.identity, function, tuple(args), transient or {}, endorsers
        )

    def submit(
        self,
        function: str,
        *args,
        transient: Optional[Mapping[str, bytes]] = None,
        endorsers: Optional[Iterable[MspId]] = None,
    ) -> TransactionRecord:
        return self.ledger.submit_transaction(
            self._proposal(function, args, transient, endorsers)
        )

    def evaluate(self, function: str, *args) -> bytes:
        return self.ledger.evaluate_transaction(self._proposal(function, args))

    def register_server(self, server_id: str, capabilities: str = "") -> TransactionRecord:
        return self.submit("registerServer", server_id, capabilities)

    def register_client(self, client_id: str, dataset_size: int) -> TransactionRecord:
        return self.submit("registerClient", client_id, dataset_size)

    def publish_model(
        self,
        model_id: str,
        fc_spec_hash: Cid,
        fs_spec_hash: Cid,
        split_point_label: str,
        genesis_hash: Optional[Cid] = None,
    ) -> TransactionRecord:
        args = [model_id, fc_spec_hash, fs_spec_hash, split_point_label]
        if genesis_hash is not None:
            args.append(genesis_hash)
        return self.submit("publishModel", *args)

    def get_available_models(self) -> List[ModelMeta]:
        raw = self.evaluate("getAvailableModels")
        models, pos = [], 0
        while pos < len(raw):
            size = int.from_bytes(raw[pos : pos + 8], "little")
            models.append(ModelMeta.from_bytes(raw[pos + 8 : pos + 8 + size]))
            pos += 8 + size
        return models

    def get_model(self, model_id: str) -> ModelMeta:
        return ModelMeta.from_bytes(self.evaluate("getModel", model_id))

    def add_intermediate_data(
        self,
        round_id: int,
        data_hash: Cid,
        transient: Mapping[str, bytes],
        metadata: str = "",
    ) -> TransactionRecord:
        return self.submit(
            "addIntermediateData", round_id, data_hash, metadata, transient=transient
        )

    def add_gradients(
        self,
        client_id: str,
        round_id: int,
        grad_hash: Cid,
        transient: Mapping[str, bytes],
        metadata: str = "",
    ) -> TransactionRecord:
        return self.submit(
            "addGradients", client_id, round_id, grad_hash, metadata, transient=transient
        )

    def get_intermediate_data_hash(
        self, round_id: int, client_id: str, kind: Union[IntermediateKind, str]
    ) -> IntermediateRef:
        kind = IntermediateKind(kind).value
        return IntermediateRef.from_bytes(
            self.evaluate("getIntermediateDataHash", round_id, client_id, kind)
        )

    def submit_client_model_hash(
        self, round_id: int, aggregation_id: str, param_hash: Cid, metadata: str = ""
    ) -> TransactionRecord:
        return self.submit(
            "submitClientModelHash", round_id, aggregation_id, param_hash, metadata
        )

    def trigger_client_aggregation(self, aggregation_id: str) -> TransactionRecord:
        return self.submit("triggerClientAggregation", aggregation_id)

    def query_client_model_hashes(self, aggregation_id: str) -> Tuple[MemberHash, ...]:
        raw = self.evaluate("queryClientModelHashesForAggregation", aggregation_id)
        return decode_member_hashes(raw)[2]

    def get_aggregation_task(self, aggregation_id: str) -> AggregationTask:
        return AggregationTask.from_bytes(self.evaluate("getAggregationTask", aggregation_id))

    def commit_global_model_hash(
        self,
        aggregation_id: str,
        round_id: int,
        global_hash: Cid,
        endorsers: Optional[Iterable[MspId]] = None,
    ) -> TransactionRecord:
        return self.submit(
            "commitGlobalModelHash",
            aggregation_id,
            round_id,
            global_hash,
            endorsers=endorsers,
        )

    def end_global_model(
        self, aggregation_id: str, round_id: int, endorsers: Optional[Iterable[MspId]] = None
    ) -> TransactionRecord:
        return self.submit("endGlobalModel", aggregation_id, round_id, endorsers=endorsers)

    def get_current_global_model(self) -> GlobalModelRecord:
        return GlobalModelRecord.from_bytes(self.evaluate("getCurrentGlobalModel"))


@dataclass
class FSLNetwork:
    """A bootstrapped channel with the FSL chaincode installed."""

    ledger: Ledger
    contract: FSLContract
    store: OffchainStore
    server: Identity
    admin: Identity
    clients: Dict[str, Identity] = field(default_factory=dict)

    def gateway(self, identity: Union[Identity, str]) -> FSLGateway:
        if isinstance(identity, str):
            identity = self.clients[identity]
        return FSLGateway(self.ledger, identity)

    @property
    def client_msps(self) -> List[MspId]:
        return [identity.msp for identity in self.clients.values()]


def bootstrap_fsl_network(
    n_clients: int,
    store: Optional[OffchainStore] = None,
    consensus_fraction: Union[Fraction, float] = DEFAULT_CONSENSUS,
    server_id: str = "server",
    admin_id: str = "admin",
) -> FSLNetwork:
    """
    Channel with ``n_clients`` client organizations, one server entity and one admin.

    Client ``i`` (1-based) belongs to ``Client{i}MSP`` and acts as ``client{i:02d}``.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be at least 1")
    store = store if store is not None else OffchainStore()
    clients = {}
    for i, client_id in enumerate(client_ids(n_clients), start=1):
        msp = MspId("Client{}MSP".format(i), Role.CLIENT)
        clients[client_id] = Identity(msp, client_id, Role.CLIENT)
    server = Identity(MspId("ServerMSP", Role.SERVER_ENTITY), server_id, Role.SERVER_ENTITY)
    admin = Identity(MspId("AdminMSP", Role.ADMIN), admin_id, Role.ADMIN)
    msps = [c.msp for c in clients.values()] + [server.msp, admin.msp]
    ledger = bootstrap_network(msps, fsl_collections(msps), fsl_policies(msps))
    contract = FSLContract(store, consensus_fraction)
    contract.install(ledger)
    return FSLNetwork(ledger, contract, store, server, admin, clients)

