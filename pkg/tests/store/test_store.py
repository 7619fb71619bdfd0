import os

import pytest

import fslsim
from fslsim.store import Blob, BlobNotFoundError, Cid, OffchainStore


def test_cid_format():
    cid = Cid.of(b"hello")
    assert len(cid) == 46
    assert cid.startswith("Qm")
    assert Cid.is_valid(cid)
    assert Cid.is_valid(bytes(cid))
    assert cid.matches(b"hello")
    assert not cid.matches(b"hello!")
    assert len(cid.digest) == 32
    assert Cid.of(b"hello") == Cid(str(cid))
    for bad in ("", "Qm", "Xm" + cid[2:], cid[:-1], cid[:-1] + "0"):
        assert not Cid.is_valid(bad)
        with pytest.raises(ValueError):
            Cid(bad)
    assert not Cid.is_valid(b"\xff" * 46)


def test_put_get_verify():
    store = OffchainStore("")
    cid = store.put(b"payload")
    assert cid == Cid.of(b"payload")
    assert store.get(cid) == b"payload"
    assert isinstance(store.get(cid), Blob)
    assert cid in store
    assert store.verify(store.get(cid), cid) == cid

    # idempotent
    assert store.put(b"payload") == cid
    assert len(store) == 1
    assert store.bytes_written == len(b"payload")

    with pytest.raises(ValueError, match="hash verification failed"):
        store.verify(b"tampered", cid)


def test_missing_blobs():
    store = OffchainStore("")
    with pytest.raises(BlobNotFoundError, match="not found"):
        store.get(Cid.of(b"never stored"))
    with pytest.raises(BlobNotFoundError):
        store.get("not a cid")
    assert not store.contains("not a cid")
    assert Cid.of(b"x") not in store


def test_gc_keeps_live_set():
    store = OffchainStore("")
    keep = store.put(b"keep")
    drop = [store.put(bytes([i]) * 10) for i in range(3)]
    assert store.gc([keep]) == 3
    assert list(store.cids()) == [keep]
    for cid in drop:
        assert cid not in store
    assert store.total_bytes == 4


def test_disk_backed_store(save_path):
    root = os.path.join(save_path, "blobs")
    store = OffchainStore(root)
    cid = store.put(b"persisted blob")
    path = os.path.join(root, cid[2:4], cid)
    assert os.path.exists(path)

    reopened = OffchainStore(root)
    assert len(reopened) == 0
    assert cid in list(reopened.cids())
    assert reopened.get(cid) == b"persisted blob"

    with open(path, "wb") as f:
        f.write(b"corrupted")
    with pytest.raises(ValueError, match="corrupt blob"):
        OffchainStore(root).get(cid)

    assert OffchainStore(root).gc([]) == 1
    assert not os.path.exists(path)


def test_store_dir_setting(save_path):
    root = os.path.join(save_path, "settings-store")
    fslsim.settings.store_dir = root
    try:
        store = OffchainStore()
        assert store.root == root
    finally:
        fslsim.settings.store_dir = None
    assert OffchainStore("").root is None
