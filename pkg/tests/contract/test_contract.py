from fractions import Fraction

import pytest

from fslsim import _CONSTANTS
from fslsim.contract import (
    FSLContract,
    IntermediateKind,
    IntermediateNotice,
    TaskStatus,
    bootstrap_fsl_network,
    consensus_reached,
    decode_member_hashes,
    endorsement_quorum,
)
from fslsim.ledger import (
    AccessDeniedError,
    ChaincodeError,
    EndorsementError,
    LedgerError,
    Role,
    TransactionProposal,
    TransientKeyError,
)
from fslsim.store import Cid, OffchainStore


def _network(n_clients=3, fraction=Fraction(2, 3)):
    store = OffchainStore("")
    network = bootstrap_fsl_network(n_clients, store, fraction)
    genesis = store.put(b"genesis parameters")
    admin = network.gateway(network.admin)
    admin.publish_model(
        "toy", store.put(b"fc spec"), store.put(b"fs spec"), "after relu", genesis
    ).raise_for_status()
    network.gateway(network.server).register_server("server").raise_for_status()
    for i, client_id in enumerate(network.clients):
        network.gateway(client_id).register_client(client_id, 10 * (i + 1)).raise_for_status()
    return network, store, genesis


def _open_task(network, store, aggregation_id="agg-1", round_id=0, members=None):
    members = list(network.clients) if members is None else members
    hashes = {}
    for client_id in members:
        cid = store.put("params of {}".format(client_id).encode())
        network.gateway(client_id).submit_client_model_hash(
            round_id, aggregation_id, cid
        ).raise_for_status()
        hashes[client_id] = cid
    network.gateway(network.admin).trigger_client_aggregation(
        aggregation_id
    ).raise_for_status()
    return hashes


def test_bootstrap_layout():
    network, _, _ = _network(3)
    assert list(network.clients) == ["client01", "client02", "client03"]
    assert [m.name for m in network.client_msps] == ["Client1MSP", "Client2MSP", "Client3MSP"]
    assert network.server.msp.name == "ServerMSP"
    assert network.admin.msp.name == "AdminMSP"
    names = [c.name for c in network.ledger.collections]
    assert names == [
        _CONSTANTS.INTERMEDIATE_COLLECTION,
        _CONSTANTS.CLIENT_MODEL_COLLECTION,
        _CONSTANTS.GLOBAL_MODEL_COLLECTION,
    ]
    policy = network.ledger.policy_for("endGlobalModel")
    assert policy.threshold == 2
    with pytest.raises(ValueError):
        bootstrap_fsl_network(0)


def test_consensus_predicate():
    assert consensus_reached(3, 3)
    assert not consensus_reached(2, 3)
    assert consensus_reached(7, 10)
    assert not consensus_reached(6, 9)
    assert consensus_reached(1, 1)
    assert not consensus_reached(0, 0)
    assert consensus_reached(2, 3, fraction=0.5)
    assert [endorsement_quorum(n) for n in (1, 2, 3, 10)] == [1, 2, 2, 7]
    with pytest.raises(ValueError):
        FSLContract(OffchainStore(""), consensus_fraction=1)


CLIENT, SERVER, ADMIN = Role.CLIENT, Role.SERVER_ENTITY, Role.ADMIN
EVERYONE = {CLIENT, SERVER, ADMIN}

GATES = {
    "registerServer": {SERVER},
    "registerClient": {CLIENT},
    "publishModel": {CLIENT, ADMIN},
    "getAvailableModels": EVERYONE,
    "getModel": EVERYONE,
    "addIntermediateData": {CLIENT},
    "addGradients": {SERVER},
    "getIntermediateDataHash": EVERYONE,
    "submitClientModelHash": {CLIENT},
    "triggerClientAggregation": {ADMIN},
    "queryClientModelHashesForAggregation": {CLIENT, ADMIN},
    "commitGlobalModelHash": {CLIENT},
    "endGlobalModel": {CLIENT},
    "getCurrentGlobalModel": EVERYONE,
    "getAggregationTask": EVERYONE,
}

# collection -> role -> (may read, may write)
PDC_ACCESS = {
    _CONSTANTS.INTERMEDIATE_COLLECTION: {
        CLIENT: (True, True),
        SERVER: (True, True),
        ADMIN: (True, False),
    },
    _CONSTANTS.CLIENT_MODEL_COLLECTION: {
        CLIENT: (True, True),
        SERVER: (False, False),
        ADMIN: (True, False),
    },
    _CONSTANTS.GLOBAL_MODEL_COLLECTION: {
        CLIENT: (True, True),
        SERVER: (False, False),
        ADMIN: (True, False),
    },
}


def _identities(network):
    return {
        CLIENT: network.clients["client01"],
        SERVER: network.server,
        ADMIN: network.admin,
    }


def _store_entry(stub):
    collection, key = stub.args[0].decode(), stub.args[1].decode()
    stub.put_private(collection, key, bytes(Cid.of(stub.get_transient("value"))))


def _pdc_network():
    network, _, _ = _network(2)
    network.ledger.register_function("storeEntry", _store_entry)
    return network


def _store(network, identity, collection, key):
    return network.ledger.submit_transaction(
        TransactionProposal(identity, "storeEntry", (collection, key), {"value": b"v"})
    )


def test_role_gating():
    network, _, _ = _network(2)
    assert set(GATES) == set(FSLContract.ROLES)
    for function, allowed in GATES.items():
        for role, identity in _identities(network).items():
            gateway = network.gateway(identity)
            if function in FSLContract.QUERIES:
                try:
                    gateway.evaluate(function)
                    message = ""
                except LedgerError as error:
                    message = str(error)
            else:
                message = gateway.submit(function).message
            denied = "role mismatch" in message
            assert denied == (role not in allowed), (function, role)


@pytest.mark.parametrize("collection", sorted(PDC_ACCESS))
@pytest.mark.parametrize("role", [CLIENT, SERVER, ADMIN])
def test_collection_access_matrix(collection, role):
    network = _pdc_network()
    may_read, may_write = PDC_ACCESS[collection][role]
    identity = _identities(network)[role]
    pdc = {p.name: p for p in network.ledger.collections}[collection]
    assert pdc.can_read(identity.msp) == may_read
    assert pdc.can_write(identity.msp) == may_write

    writer = network.clients["client01"]
    _store(network, writer, collection, "seeded").raise_for_status()
    if may_read:
        assert network.ledger.read_private(collection, "seeded", identity) == bytes(
            Cid.of(b"v")
        )
    else:
        with pytest.raises(AccessDeniedError):
            network.ledger.read_private(collection, "seeded", identity)

    record = _store(network, identity, collection, "written-by-{}".format(role.name))
    assert record.committed == may_write
    if not may_write:
        assert isinstance(record.error, AccessDeniedError)
        assert collection in record.message


def test_client_model_hashes_are_owner_scoped():
    network = _pdc_network()
    collection = _CONSTANTS.CLIENT_MODEL_COLLECTION
    owner, other = network.clients["client01"], network.clients["client02"]
    _store(network, owner, collection, "update").raise_for_status()

    assert network.ledger.read_private(collection, "update", owner) is not None
    assert network.ledger.read_private(collection, "update", network.admin) is not None
    with pytest.raises(AccessDeniedError):
        network.ledger.read_private(collection, "update", other)
    record = _store(network, other, collection, "update")
    assert isinstance(record.error, AccessDeniedError)

    # not owner-scoped: any client reads every entry
    _store(network, owner, _CONSTANTS.GLOBAL_MODEL_COLLECTION, "global").raise_for_status()
    assert network.ledger.read_private(_CONSTANTS.GLOBAL_MODEL_COLLECTION, "global", other)


def test_registration_rules():
    network, _, _ = _network(2)
    client = network.gateway("client01")
    record = client.register_client("client01", 5)
    assert "client 'client01' exists" in record.message
    record = client.register_client("client02", 5)
    assert "identity mismatch" in record.message
    record = network.gateway("client02").register_client("client02", 0)
    assert "empty dataset" in record.message
    record = network.gateway(network.server).register_server("server")
    assert "exists" in record.message
    record = client.submit("registerClient", "client01", "many")
    assert "must be an integer" in record.message


def test_publish_and_query_models():
    store = OffchainStore("")
    network = bootstrap_fsl_network(2, store)
    admin = network.gateway(network.admin)
    with pytest.raises(ChaincodeError, match="no global model published"):
        admin.get_current_global_model()

    dangling = Cid.of(b"not in the store")
    record = admin.publish_model("m", dangling, store.put(b"fs"), "cut")
    assert "dangling reference" in record.message

    fc, fs, genesis = store.put(b"fc"), store.put(b"fs"), store.put(b"genesis")
    record = network.gateway("client01").publish_model("m", fc, fs, "cut", genesis)
    record.raise_for_status()
    assert [e.name for e in record.events] == [_CONSTANTS.MODEL_PUBLISHED]
    assert record.events[0].cids == (fc, fs, genesis)
    assert "exists" in admin.publish_model("m", fc, fs, "cut").message
    admin.publish_model("a-second", fc, fs, "cut").raise_for_status()

    meta = admin.get_model("m")
    assert (meta.fc_spec_hash, meta.fs_spec_hash, meta.genesis_hash) == (fc, fs, genesis)
    assert meta.publisher_msp == "Client1MSP"
    assert [m.model_id for m in network.gateway("client02").get_available_models()] == [
        "a-second",
        "m",
    ]
    current = admin.get_current_global_model()
    assert current.global_hash == genesis
    assert current.round_id == 0
    with pytest.raises(ChaincodeError, match="unknown model"):
        admin.get_model("missing")


def test_intermediate_data_exchange():
    network, store, _ = _network(2)
    client = network.gateway("client01")
    server = network.gateway(network.server)
    stream = network.ledger.subscribe(_CONSTANTS.INTERMEDIATE_ADDED, network.server)

    blob = b"activation bytes of client01"
    cid = Cid.of(blob)
    record = client.add_intermediate_data(0, cid, {"data": blob}, metadata="batch=2")
    record.raise_for_status()
    assert blob not in record.serialize()
    (event,) = stream.drain()
    notice = IntermediateNotice.from_bytes(event.payload)
    assert (notice.data_hash, notice.round_id, notice.client_id) == (cid, 0, "client01")
    assert notice.tx_id == record.tx_id
    assert event.reference_bytes == 46

    ref = server.get_intermediate_data_hash(0, "client01", IntermediateKind.ACTIVATION)
    assert ref.data_hash == cid
    assert ref.metadata == "batch=2"

    duplicate = client.add_intermediate_data(0, cid, {"data": blob})
    assert "exists" in duplicate.message
    wrong = client.add_intermediate_data(1, cid, {"data": b"something else"})
    assert "hash verification failed" in wrong.message
    missing = client.add_intermediate_data(1, cid, {})
    assert isinstance(missing.error, TransientKeyError)

    orphan = server.add_gradients("client02", 0, cid, {"data": blob})
    assert "no pending activation" in orphan.message

    gradient = b"gradient bytes for client01"
    grad_cid = store.put(gradient)
    record = server.add_gradients("client01", 0, grad_cid, {"cid": bytes(grad_cid)})
    record.raise_for_status()
    assert record.events[0].name == _CONSTANTS.GRADIENT_ADDED
    ref = client.get_intermediate_data_hash(0, "client01", "gradient")
    assert ref.data_hash == grad_cid

    unresolved = Cid.of(b"never stored")
    client.add_intermediate_data(2, unresolved, {"data": b"never stored"}).raise_for_status()
    record = server.add_gradients("client01", 2, unresolved, {"cid": bytes(unresolved)})
    assert "dangling reference" in record.message

    with pytest.raises(ChaincodeError, match="no activation"):
        server.get_intermediate_data_hash(5, "client01", "activation")


def test_client_model_hashes_are_private():
    network, store, _ = _network(3)
    hashes = _open_task(network, store)
    key = "agg/agg-1/client01"
    ledger = network.ledger
    collection = _CONSTANTS.CLIENT_MODEL_COLLECTION
    assert ledger.read_private(collection, key, network.clients["client01"]) == bytes(
        hashes["client01"]
    )
    assert ledger.read_private(collection, key, network.admin) == bytes(hashes["client01"])
    for intruder in (network.clients["client02"], network.server):
        with pytest.raises(AccessDeniedError):
            ledger.read_private(collection, key, intruder)


def test_aggregation_task_lifecycle():
    network, store, _ = _network(3)
    stream = network.ledger.subscribe(_CONSTANTS.AGGREGATION_START, network.clients["client02"])
    hashes = _open_task(network, store)

    (event,) = stream.drain()
    aggregation_id, round_id, members = decode_member_hashes(event.payload)
    assert (aggregation_id, round_id) == ("agg-1", 0)
    assert [(m.client_id, m.param_hash, m.dataset_size) for m in members] == [
        ("client01", hashes["client01"], 10),
        ("client02", hashes["client02"], 20),
        ("client03", hashes["client03"], 30),
    ]
    assert set(event.cids) == set(hashes.values())
    assert network.gateway("client03").query_client_model_hashes("agg-1") == members

    late = network.gateway("client01").submit_client_model_hash(0, "agg-1", hashes["client01"])
    assert "task open" in late.message
    again = network.gateway(network.admin).trigger_client_aggregation("agg-1")
    assert "task open" in again.message
    empty = network.gateway(network.admin).trigger_client_aggregation("agg-2")
    assert "nothing to aggregate" in empty.message

    task = network.gateway(network.admin).get_aggregation_task("agg-1")
    assert task.status is TaskStatus.OPEN
    assert task.participants == ["client01", "client02", "client03"]


def test_duplicate_submission_rejected():
    network, store, _ = _network(2)
    client = network.gateway("client01")
    cid = store.put(b"params")
    client.submit_client_model_hash(0, "agg-1", cid).raise_for_status()
    record = client.submit_client_model_hash(0, "agg-1", cid)
    assert "already submitted" in record.message
    record = client.submit_client_model_hash(0, "agg-1", Cid.of(b"unstored"))
    assert "dangling reference" in record.message


def test_ids_cannot_nest_keys():
    network, store, _ = _network(2)
    client = network.gateway("client01")
    cid = store.put(b"params")
    record = client.submit_client_model_hash(0, "agg/nested", cid)
    assert not record.committed
    assert "aggregation_id may not contain '/'" in record.message
    client.submit_client_model_hash(0, "agg-nested", cid).raise_for_status()

    admin = network.gateway(network.admin)
    assert "nothing to aggregate" in admin.trigger_client_aggregation("agg").message
    assert "may not contain" in admin.trigger_client_aggregation("agg-nested/").message
    admin.trigger_client_aggregation("agg-nested").raise_for_status()
    assert admin.get_aggregation_task("agg-nested").participants == ["client01"]

    rogue = network.gateway("client02").register_client("client/02", 5)
    assert "may not contain" in rogue.message


def test_consensus_commits_global_model():
    network, store, genesis = _network(3)
    _open_task(network, store)
    agreed = store.put(b"averaged parameters")
    for client_id in network.clients:
        network.gateway(client_id).commit_global_model_hash(
            "agg-1", 0, agreed
        ).raise_for_status()

    closer = network.gateway("client03")
    too_few = closer.end_global_model("agg-1", 0, endorsers=network.client_msps[:1])
    assert isinstance(too_few.error, EndorsementError)

    record = closer.end_global_model("agg-1", 0, endorsers=network.client_msps)
    record.raise_for_status()
    assert [e.name for e in record.events] == [_CONSTANTS.GLOBAL_MODEL_UPDATED]
    current = closer.get_current_global_model()
    assert current.global_hash == agreed
    assert current.committed_at_height == record.height
    assert current.aggregation_id == "agg-1"
    assert network.ledger.read_private(
        _CONSTANTS.GLOBAL_MODEL_COLLECTION, "agg/agg-1", network.admin
    ) == bytes(agreed)

    task = closer.get_aggregation_task("agg-1")
    assert task.status is TaskStatus.COMMITTED
    assert task.global_hash == agreed
    again = closer.end_global_model("agg-1", 0, endorsers=network.client_msps)
    assert "task closed" in again.message
    assert current.global_hash != genesis


def test_commit_rules():
    network, store, _ = _network(3)
    _open_task(network, store, members=["client01", "client02"])
    agreed = store.put(b"averaged")
    outsider = network.gateway("client03").commit_global_model_hash("agg-1", 0, agreed)
    assert "is not a participant" in outsider.message
    wrong_round = network.gateway("client01").commit_global_model_hash("agg-1", 4, agreed)
    assert "round mismatch" in wrong_round.message
    network.gateway("client01").commit_global_model_hash("agg-1", 0, agreed).raise_for_status()
    twice = network.gateway("client01").commit_global_model_hash("agg-1", 0, agreed)
    assert "already submitted" in twice.message
    unknown = network.gateway("client01").commit_global_model_hash("agg-9", 0, agreed)
    assert "unknown aggregation" in unknown.message

    # two participants, both must agree
    network.gateway("client02").commit_global_model_hash("agg-1", 0, agreed).raise_for_status()
    record = network.gateway("client02").end_global_model(
        "agg-1", 0, endorsers=network.client_msps
    )
    assert record.result


def test_failed_consensus_keeps_previous_model():
    network, store, genesis = _network(3)
    failures = network.ledger.subscribe(_CONSTANTS.AGGREGATION_FAILED, network.admin)
    _open_task(network, store)
    agreed = store.put(b"averaged")
    for client_id in ("client01", "client02"):
        network.gateway(client_id).commit_global_model_hash(
            "agg-1", 0, agreed
        ).raise_for_status()
    network.gateway("client03").commit_global_model_hash(
        "agg-1", 0, store.put(b"corrupted average")
    ).raise_for_status()

    record = network.gateway("client03").end_global_model(
        "agg-1", 0, endorsers=network.client_msps
    )
    record.raise_for_status()
    assert record.result == b""
    assert len(failures.drain()) == 1
    assert network.gateway(network.admin).get_current_global_model().global_hash == genesis
    task = network.gateway(network.admin).get_aggregation_task("agg-1")
    assert task.status is TaskStatus.FAILED
    assert task.global_hash is None


def test_custom_threshold():
    network, store, _ = _network(3, fraction=0.5)
    _open_task(network, store)
    agreed = store.put(b"averaged")
    for client_id in ("client01", "client02"):
        network.gateway(client_id).commit_global_model_hash(
            "agg-1", 0, agreed
        ).raise_for_status()
    record = network.gateway("client01").end_global_model(
        "agg-1", 0, endorsers=network.client_msps
    )
    assert record.result
    assert network.gateway(network.admin).get_current_global_model().global_hash == agreed
