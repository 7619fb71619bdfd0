import os

import numpy as np
import pandas as pd

from fslsim.ledger import (
    METRICS_COLUMNS,
    Identity,
    MspId,
    Role,
    TransactionProposal,
    bootstrap_network,
    export_ledger,
    export_metrics_csv,
    find_fragment_leaks,
    find_value_leaks,
    ledger_file_bytes,
    read_ledger,
)


def _ledger_with_records(n=4):
    msps = [
        MspId("Client1MSP", Role.CLIENT),
        MspId("ServerMSP", Role.SERVER_ENTITY),
        MspId("AdminMSP", Role.ADMIN),
    ]
    ledger = bootstrap_network(msps, [])

    def put(stub):
        stub.put_state(stub.args[0].decode(), stub.args[1])

    ledger.register_function("put", put)
    alice = Identity(msps[0], "alice", Role.CLIENT)
    for i in range(n):
        ledger.submit_transaction(TransactionProposal(alice, "put", ("k{}".format(i), i)))
    ledger.submit_transaction(TransactionProposal(alice, "missing"))
    return ledger


def test_export_and_read_ledger(save_path):
    ledger = _ledger_with_records()
    path = os.path.join(save_path, "ledger.b64")
    assert export_ledger(ledger.records + ledger.rejected, path) == 4
    records = read_ledger(path)
    assert records == ledger.records
    assert ledger_file_bytes(path) == b"".join(r.serialize() for r in ledger.records)
    assert len(ledger_file_bytes(path)) == ledger.metrics().ledger_bytes


def test_export_metrics_csv(save_path):
    ledger = _ledger_with_records()
    path = os.path.join(save_path, "ledger_metrics.csv")
    export_metrics_csv(ledger.metrics_history(), path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == METRICS_COLUMNS
    assert frame["height"].tolist() == [1, 2, 3, 4]
    assert frame["ledger_bytes"].iloc[-1] == ledger.metrics().ledger_bytes


def test_value_leaks():
    haystack = b"header" + b"0123456789abcdef" + b"trailer"
    leaks = find_value_leaks(haystack, [b"0123456789abcdef", b"absent value!", b"short"])
    assert len(leaks) == 1
    assert leaks[0].source == 0
    assert leaks[0].offset == 6


def test_fragment_leaks():
    random_state = np.random.RandomState(0)
    blob = random_state.bytes(4096)
    clean = random_state.bytes(4096)
    assert find_fragment_leaks(clean, [blob]) == []

    haystack = clean[:1000] + blob[2000:2012] + clean[1000:]
    leaks = find_fragment_leaks(haystack, [blob], window=9)
    assert leaks
    assert all(2000 <= leak.offset <= 2003 for leak in leaks)
    assert all(leak.fragment in haystack for leak in leaks)


def test_fragment_scan_skips_low_entropy_windows():
    zeros = bytes(64)
    haystack = b"\x01" + bytes(32) + b"\x02"
    assert find_fragment_leaks(haystack, [zeros]) == []
    assert find_fragment_leaks(b"short", [zeros]) == []
