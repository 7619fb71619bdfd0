"""
Canonical binary encoding shared by ledger records and event payloads.

Integers are little-endian unsigned 64-bit, strings are UTF-8 and, like byte strings,
prefixed with their length. Cids are written as their raw 46 ASCII characters.
"""
import struct
from typing import List

from fslsim import _CONSTANTS

_U64 = struct.Struct("<Q")


class Encoder:
    def __init__(self):
        self._parts: List[bytes] = []

    def u64(self, value: int) -> "Encoder":
        if value < 0:
            raise ValueError("cannot encode negative integer {}".format(value))
        self._parts.append(_U64.pack(value))
        return self

    def blob(self, data: bytes) -> "Encoder":
        self.u64(len(data))
        self._parts.append(bytes(data))
        return self

    def text(self, value: str) -> "Encoder":
        return self.blob(value.encode("utf-8"))

    def cid(self, value: str) -> "Encoder":
        raw = value.encode("ascii")
        if len(raw) != _CONSTANTS.CID_LENGTH:
            raise ValueError(
                "cid must be {} bytes, got {}".format(_CONSTANTS.CID_LENGTH, len(raw))
            )
        self._parts.append(raw)
        return self

    def raw(self, data: bytes) -> "Encoder":
        self._parts.append(bytes(data))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Decoder:
    def __init__(self, data: bytes):
        self._data = memoryview(bytes(data))
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise ValueError("truncated record")
        chunk = self._data[self._pos : end].tobytes()
        self._pos = end
        return chunk

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def u64(self) -> int:
        return _U64.unpack(self._take(_U64.size))[0]

    def blob(self) -> bytes:
        return self._take(self.u64())

    def text(self) -> str:
        return self.blob().decode("utf-8")

    def cid(self) -> str:
        return self._take(_CONSTANTS.CID_LENGTH).decode("ascii")

    @property
    def at_end(self) -> bool:
        return self._pos == len(self._data)

    def finish(self):
        if not self.at_end:
            raise ValueError(
                "{} trailing bytes after record".format(len(self._data) - self._pos)
            )
