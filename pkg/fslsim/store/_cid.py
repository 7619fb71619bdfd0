import hashlib
import re

import base58

from fslsim import _CONSTANTS

_PREFIX = "Qm"
_BODY_LENGTH = _CONSTANTS.CID_LENGTH - len(_PREFIX)
_PATTERN = re.compile(
    "^{}[1-9A-HJ-NP-Za-km-z]{{{}}}$".format(_PREFIX, _BODY_LENGTH)
)


class Cid(str):
    """
    Content identifier of a blob.

    ``"Qm"`` followed by the base58 encoding of the blob's SHA-256 digest, left-padded
    with the base58 zero digit to 44 characters. Always 46 characters long.

    Examples
    --------
    >>> cid = Cid.of(b"hello")
    >>> len(cid)
    46
    """

    def __new__(cls, text: str):
        if isinstance(text, bytes):
            text = text.decode("ascii")
        if not _PATTERN.match(text):
            raise ValueError("malformed cid {!r}".format(text))
        return super().__new__(cls, text)

    @classmethod
    def of(cls, blob: bytes) -> "Cid":
        digest = hashlib.sha256(blob).digest()
        body = base58.b58encode(digest).decode("ascii").rjust(_BODY_LENGTH, "1")
        return cls(_PREFIX + body)

    @classmethod
    def is_valid(cls, text) -> bool:
        if isinstance(text, bytes):
            try:
                text = text.decode("ascii")
            except UnicodeDecodeError:
                return False
        return isinstance(text, str) and _PATTERN.match(text) is not None

    @property
    def digest(self) -> bytes:
        return base58.b58decode(self[len(_PREFIX) :])[-32:]

    def matches(self, blob: bytes) -> bool:
        return Cid.of(blob) == self

    def __bytes__(self):
        return self.encode("ascii")


class Blob(bytes):
    """Immutable byte payload held by the off-chain store."""

    @property
    def size(self) -> int:
        return len(self)

    @property
    def cid(self) -> Cid:
        return Cid.of(self)
