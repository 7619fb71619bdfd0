import pytest

from fslsim.ledger import (
    AccessDeniedError,
    ChaincodeError,
    EndorsementError,
    EndorsementPolicy,
    Identity,
    Ledger,
    LedgerError,
    MembershipError,
    MspId,
    PdcDefinition,
    Role,
    TransactionProposal,
    TransientKeyError,
    TxStatus,
    bootstrap_network,
    find_value_leaks,
)
from fslsim.store import Cid

C1 = MspId("Client1MSP", Role.CLIENT)
C2 = MspId("Client2MSP", Role.CLIENT)
SERVER = MspId("ServerMSP", Role.SERVER_ENTITY)
ADMIN = MspId("AdminMSP", Role.ADMIN)
MSPS = [C1, C2, SERVER, ADMIN]

ALICE = Identity(C1, "alice", Role.CLIENT)
BOB = Identity(C2, "bob", Role.CLIENT)
SRV = Identity(SERVER, "server", Role.SERVER_ENTITY)
ADM = Identity(ADMIN, "admin", Role.ADMIN)


def _put(stub):
    stub.put_state(stub.args[0].decode(), stub.args[1])
    return b"ok"


def _put_private(stub):
    collection, key = stub.args[0].decode(), stub.args[1].decode()
    value = stub.get_transient("value")
    cid = Cid.of(value)
    stub.put_private(collection, key, bytes(cid))
    stub.set_event("Stored", key.encode(), (cid,))


def _get(stub):
    return stub.get_state(stub.args[0].decode())


def _fail_after_write(stub):
    stub.put_state("half", b"written")
    stub.set_event("Never", b"")
    raise ChaincodeError("rule violated")


def _network():
    collections = [
        PdcDefinition("secret", read_policy=[C1, ADMIN], write_policy=[C1]),
        PdcDefinition(
            "owned",
            read_policy=[C1, C2, ADMIN],
            write_policy=[C1, C2],
            owner_scoped=[C1, C2],
        ),
    ]
    ledger = bootstrap_network(MSPS, collections)
    ledger.register_function("put", _put)
    ledger.register_function("putPrivate", _put_private)
    ledger.register_function("get", _get)
    ledger.register_function("fail", _fail_after_write)
    return ledger


def _submit(ledger, identity, function, *args, transient=None, endorsers=None):
    return ledger.submit_transaction(
        TransactionProposal(identity, function, args, transient or {}, endorsers)
    )


def test_membership_validation():
    with pytest.raises(MembershipError, match="no members"):
        Ledger([])
    with pytest.raises(MembershipError, match="duplicate MSP"):
        Ledger([C1, C1, SERVER, ADMIN])
    with pytest.raises(MembershipError, match="at least one Client MSP"):
        Ledger([SERVER, ADMIN])
    with pytest.raises(MembershipError, match="exactly one Server MSP"):
        Ledger([C1, SERVER, MspId("Server2MSP", Role.SERVER_ENTITY), ADMIN])
    with pytest.raises(MembershipError, match="exactly one Server MSP"):
        Ledger([C1, SERVER])
    outsider = MspId("OutsiderMSP", Role.CLIENT)
    with pytest.raises(MembershipError, match="non-members"):
        Ledger(MSPS, [PdcDefinition("c", read_policy=[outsider], write_policy=[C1])])
    pdc = PdcDefinition("c", read_policy=[C1], write_policy=[C1])
    with pytest.raises(MembershipError, match="collection exists"):
        Ledger(MSPS, [pdc, pdc])


def test_fresh_ledger_is_empty():
    ledger = _network()
    metrics = ledger.metrics()
    assert ledger.height == 0
    assert metrics.committed_tx_count == 0
    assert metrics.ledger_bytes == 0
    assert metrics.pdc_bytes_by_collection == {"secret": 0, "owned": 0}
    assert ledger.msps_with_role(Role.CLIENT) == [C1, C2]


def test_commit_heights_and_tx_ids():
    ledger = _network()
    records = [_submit(ledger, ALICE, "put", "k{}".format(i), b"v") for i in range(5)]
    assert [r.height for r in records] == [1, 2, 3, 4, 5]
    assert len({r.tx_id for r in records}) == 5
    assert all(r.status is TxStatus.COMMITTED for r in records)
    assert records[0].result == b"ok"
    assert ledger.world_state()["k3"] == b"v"
    assert ledger.metrics().height == 5


def test_rejection_leaves_state_untouched():
    ledger = _network()
    _submit(ledger, ALICE, "put", "a", b"1")
    before = ledger.metrics()
    record = _submit(ledger, ALICE, "fail")
    assert record.status is TxStatus.REJECTED
    assert record.height == 0
    assert "rule violated" in record.message
    with pytest.raises(ChaincodeError):
        record.raise_for_status()
    after = ledger.metrics()
    assert "half" not in ledger.world_state()
    assert after.ledger_bytes == before.ledger_bytes
    assert after.events_by_name == before.events_by_name
    assert after.rejected_tx_count == 1
    assert ledger.height == 1
    assert ledger.rejected == [record]


def test_unknown_function_and_non_member():
    ledger = _network()
    record = _submit(ledger, ALICE, "nope")
    assert not record.committed
    assert "unknown function" in record.message

    stranger = Identity(MspId("Client9MSP", Role.CLIENT), "eve", Role.CLIENT)
    record = _submit(ledger, stranger, "put", "k", b"v")
    assert not record.committed
    assert isinstance(record.error, MembershipError)

    impostor = Identity(C1, "mallory", Role.ADMIN)
    with pytest.raises(MembershipError):
        _submit(ledger, impostor, "put", "k", b"v").raise_for_status()


def test_endorsement_policy():
    ledger = _network()
    ledger.set_policy("put", EndorsementPolicy.m_of_n([C1, C2], 2))
    record = _submit(ledger, ALICE, "put", "k", b"v")
    assert isinstance(record.error, EndorsementError)
    record = _submit(ledger, ALICE, "put", "k", b"v", endorsers=[C1, SERVER])
    assert not record.committed
    record = _submit(ledger, ALICE, "put", "k", b"v", endorsers=[C1, C2])
    assert record.committed

    with pytest.raises(ValueError):
        EndorsementPolicy.m_of_n([C1, C2], 3)
    with pytest.raises(MembershipError):
        ledger.set_policy("put", EndorsementPolicy.any_of([MspId("XMSP")]))
    assert EndorsementPolicy.any_of([C1, C2]).is_satisfied_by([C2])


def test_private_collection_policies():
    ledger = _network()
    transient = {"value": b"payload"}
    assert _submit(ledger, ALICE, "putPrivate", "secret", "k", transient=transient).committed

    record = _submit(ledger, BOB, "putPrivate", "secret", "k2", transient=transient)
    assert isinstance(record.error, AccessDeniedError)
    assert str(record.error) == "access denied: Client2MSP may not write collection 'secret'"

    expected = bytes(Cid.of(b"payload"))
    assert ledger.read_private("secret", "k", ALICE) == expected
    assert ledger.read_private("secret", "k", ADM) == expected
    assert ledger.read_private("secret", "missing", ADM) is None
    for caller in (BOB, SRV):
        with pytest.raises(AccessDeniedError):
            ledger.read_private("secret", "k", caller)
    assert ledger.metrics().pdc_bytes_by_collection["secret"] == len("k") + 46


def test_owner_scoped_collection():
    ledger = _network()
    for caller, key, value in ((ALICE, "a", b"x"), (BOB, "b", b"y")):
        record = _submit(ledger, caller, "putPrivate", "owned", key, transient={"value": value})
        record.raise_for_status()

    assert ledger.read_private("owned", "a", ALICE) is not None
    assert ledger.read_private("owned", "a", ADM) is not None
    with pytest.raises(AccessDeniedError):
        ledger.read_private("owned", "a", BOB)
    with pytest.raises(AccessDeniedError):
        ledger.read_private("owned", "b", ALICE)

    record = _submit(ledger, BOB, "putPrivate", "owned", "a", transient={"value": b"z"})
    assert isinstance(record.error, AccessDeniedError)

    pdc = ledger.collections[1]
    assert pdc.can_read(C1, owner=C1)
    assert not pdc.can_read(C1, owner=C2)
    assert pdc.can_read(ADMIN, owner=C2)
    assert not pdc.can_write(ADMIN)


def test_transient_never_persisted():
    ledger = _network()
    secret = b"top secret activations 0123456789"
    record = _submit(ledger, ALICE, "putPrivate", "secret", "k", transient={"value": secret})
    record.raise_for_status()
    haystack = b"".join(r.serialize() for r in ledger.records)
    assert secret not in haystack
    assert find_value_leaks(haystack, [secret]) == []
    assert ledger.private_values("secret")["k"] == bytes(Cid.of(secret))
    # the private write only carries a digest of the value
    assert record.private_writes[0].digest != ledger.private_values("secret")["k"]


def test_missing_transient_key_rejects():
    ledger = _network()
    record = _submit(ledger, ALICE, "putPrivate", "secret", "k")
    assert isinstance(record.error, TransientKeyError)
    assert "transient key missing: value" == str(record.error)


def test_events_in_commit_order():
    ledger = _network()
    stream = ledger.subscribe("Sto*", SRV)
    for i in range(3):
        transient = {"value": bytes([i])}
        _submit(ledger, ALICE, "putPrivate", "secret", "k{}".format(i), transient=transient)
    _submit(ledger, ALICE, "fail")
    events = stream.drain()
    assert [e.payload for e in events] == [b"k0", b"k1", b"k2"]
    assert [e.tx_id for e in events] == [r.tx_id for r in ledger.records]
    assert stream.drain() == []
    metrics = ledger.metrics()
    assert metrics.reference_bytes == 3 * 46
    assert metrics.events_by_name == {"Stored": 3}
    assert "Never" not in metrics.events_by_name

    stream.close()
    _submit(ledger, ALICE, "putPrivate", "secret", "k9", transient={"value": b"9"})
    assert len(stream) == 0


def test_queries_are_read_only():
    ledger = _network()
    _submit(ledger, ALICE, "put", "k", b"v")
    query = TransactionProposal(BOB, "get", ("k",))
    assert ledger.evaluate_transaction(query) == b"v"
    with pytest.raises(LedgerError, match="not allowed in a query"):
        ledger.evaluate_transaction(TransactionProposal(BOB, "put", ("k", b"w")))
    assert ledger.height == 1


def test_replay_matches_world_state():
    ledger = _network()
    for i in range(4):
        _submit(ledger, ALICE, "put", "k{}".format(i % 2), str(i))
    _submit(ledger, ALICE, "fail")
    assert Ledger.replay(ledger.records + ledger.rejected) == ledger.world_state()

    with pytest.raises(LedgerError, match="height gap"):
        Ledger.replay(ledger.records[1:])


def test_serialized_records_decode():
    ledger = _network()
    _submit(ledger, ALICE, "putPrivate", "secret", "k", transient={"value": b"v"})
    record = ledger.records[0]
    decoded = type(record).deserialize(record.serialize())
    assert decoded == record
    with pytest.raises(ValueError):
        type(record).deserialize(record.serialize()[:-1])


def test_metrics_history_and_async_submission():
    ledger = _network()
    futures = [
        ledger.submit_async(TransactionProposal(ALICE, "put", ("k{}".format(i), b"v")))
        for i in range(3)
    ]
    heights = sorted(f.result().height for f in futures)
    ledger.close()
    assert heights == [1, 2, 3]
    history = ledger.metrics_history()
    assert [row["height"] for row in history] == [1, 2, 3]
    sizes = [row["ledger_bytes"] for row in history]
    assert sizes == sorted(sizes)
    assert sizes[-1] == ledger.metrics().ledger_bytes


def test_proposal_argument_encoding():
    proposal = TransactionProposal(ALICE, "put", ("k", 12, b"raw"))
    assert proposal.args == (b"k", b"12", b"raw")
    assert proposal.endorsing_msps == frozenset([C1])
    with pytest.raises(TypeError):
        TransactionProposal(ALICE, "put", (True,))
