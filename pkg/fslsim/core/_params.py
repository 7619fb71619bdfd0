from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from fslsim.ledger._codec import Decoder, Encoder

Layout = Tuple[Tuple[str, Tuple[int, ...]], ...]

PARAMS_MAGIC = b"FSLP"
ACTIVATION_MAGIC = b"FSLA"
GRADIENT_MAGIC = b"FSLG"
FORMAT_VERSION = 1


def _normalize_layout(layout) -> Layout:
    return tuple((str(name), tuple(int(d) for d in shape)) for name, shape in layout)


def layout_size(layout: Layout) -> int:
    return int(sum(np.prod(shape, dtype=np.int64) for _, shape in layout))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """
    Flat float64 parameters with the layer layout they unpack to.

    Parameters
    ----------
    values
        1-d array; copied and made read-only.
    layout
        ``(name, shape)`` per tensor, in storage order.
    """

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        layout = _normalize_layout(self.layout)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != layout_size(layout):
            raise ValueError(
                "layout expects {} values, got {}".format(layout_size(layout), values.size)
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("parameters must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    def __repr__(self):
        return "ParamVector(n={}, tensors={})".format(len(self), len(self.layout))

    @classmethod
    def zeros(cls, layout: Layout) -> "ParamVector":
        layout = _normalize_layout(layout)
        return cls(np.zeros(layout_size(layout)), layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector.zeros(self.layout)

    def check_compatible(self, other: "ParamVector"):
        if self.layout != other.layout:
            raise ValueError("layout mismatch")

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def to_state_dict(self) -> "OrderedDict[str, torch.Tensor]":
        """Tensors keyed by layer name, as expected by ``functional_call``."""
        state = OrderedDict()
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape, dtype=np.int64))
            chunk = self.values[offset : offset + n].reshape(shape)
            state[name] = torch.tensor(chunk, dtype=torch.float64)
            offset += n
        return state

    @classmethod
    def from_state_dict(cls, state: Mapping[str, torch.Tensor]) -> "ParamVector":
        layout = tuple((name, tuple(t.shape)) for name, t in state.items())
        if not state:
            return cls(np.zeros(0), ())
        values = np.concatenate(
            [t.detach().to(torch.float64).reshape(-1).numpy() for t in state.values()]
        )
        return cls(values, layout)

    @classmethod
    def from_tensors(
        cls, names: Sequence[str], tensors: Sequence[torch.Tensor]
    ) -> "ParamVector":
        return cls.from_state_dict(OrderedDict(zip(names, tensors)))


def serialize_params(params: ParamVector) -> bytes:
    """
    Canonical bytes of ``params``.

    Magic, format version, tensor count, then per tensor its name, rank and dims,
    then every value as little-endian float64. Equal vectors give equal bytes.
    """
    enc = Encoder().raw(PARAMS_MAGIC).u64(FORMAT_VERSION).u64(len(params.layout))
    for name, shape in params.layout:
        enc.text(name).u64(len(shape))
        for dim in shape:
            enc.u64(dim)
    enc.raw(params.values.astype("<f8").tobytes())
    return enc.getvalue()


def deserialize_params(data: bytes, expected_layout: Optional[Layout] = None) -> ParamVector:
    try:
        dec = Decoder(data)
        if dec.raw(len(PARAMS_MAGIC)) != PARAMS_MAGIC:
            raise ValueError("bad magic")
        version = dec.u64()
        if version != FORMAT_VERSION:
            raise ValueError("unsupported version {}".format(version))
        layout = []
        for _ in range(dec.u64()):
            name = dec.text()
            layout.append((name, tuple(dec.u64() for _ in range(dec.u64()))))
        layout = _normalize_layout(layout)
        values = np.frombuffer(dec.raw(8 * layout_size(layout)), dtype="<f8")
        dec.finish()
    except (ValueError, UnicodeDecodeError) as error:
        raise ValueError("malformed params: {}".format(error)) from error
    if expected_layout is not None and layout != _normalize_layout(expected_layout):
        raise ValueError("layout mismatch")
    return ParamVector(values.astype(np.float64), layout)


def _encode_tensor(enc: Encoder, array: np.ndarray):
    enc.u64(array.ndim)
    for dim in array.shape:
        enc.u64(dim)
    enc.raw(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _decode_tensor(dec: Decoder) -> np.ndarray:
    shape = tuple(dec.u64() for _ in range(dec.u64()))
    n = int(np.prod(shape, dtype=np.int64))
    return np.frombuffer(dec.raw(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


@dataclass(frozen=True, eq=False)
class ActivationBatch:
    """Cut-layer outputs of one client batch, with the labels the server needs."""

    round_id: int
    client_id: str
    tensor: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        return int(self.tensor.shape[0])

    def to_bytes(self) -> bytes:
        enc = Encoder().raw(ACTIVATION_MAGIC).u64(self.round_id).text(self.client_id)
        _encode_tensor(enc, self.tensor)
        if self.labels is None:
            enc.u64(0)
        else:
            enc.u64(1).raw(np.asarray(self.labels, dtype="<i8").tobytes())
        return enc.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ActivationBatch":
        dec = Decoder(data)
        if dec.raw(len(ACTIVATION_MAGIC)) != ACTIVATION_MAGIC:
            raise ValueError("malformed activation batch: bad magic")
        round_id, client_id = dec.u64(), dec.text()
        tensor = _decode_tensor(dec)
        labels = None
        if dec.u64():
            labels = np.frombuffer(dec.raw(8 * tensor.shape[0]), dtype="<i8").astype(np.int64)
        dec.finish()
        return cls(round_id, client_id, tensor, labels)


@dataclass(frozen=True, eq=False)
class GradientBatch:
    """Loss gradient with respect to a client's activations."""

    round_id: int
    client_id: str
    tensor: np.ndarray

    def to_bytes(self) -> bytes:
        enc = Encoder().raw(GRADIENT_MAGIC).u64(self.round_id).text(self.client_id)
        _encode_tensor(enc, self.tensor)
        return enc.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GradientBatch":
        dec = Decoder(data)
        if dec.raw(len(GRADIENT_MAGIC)) != GRADIENT_MAGIC:
            raise ValueError("malformed gradient batch: bad magic")
        round_id, client_id = dec.u64(), dec.text()
        tensor = _decode_tensor(dec)
        dec.finish()
        return cls(round_id, client_id, tensor)


def private_payload(blob: bytes) -> bytes:
    """
    The numeric content of a params, activation or gradient blob.

    Headers (magic, round, client id, shapes) are dropped. Unknown blobs are returned
    unchanged.
    """
    magic = bytes(blob[:4])
    if magic == PARAMS_MAGIC:
        return deserialize_params(blob).values.astype("<f8").tobytes()
    if magic == ACTIVATION_MAGIC:
        batch = ActivationBatch.from_bytes(blob)
        return np.ascontiguousarray(batch.tensor, dtype="<f8").tobytes()
    if magic == GRADIENT_MAGIC:
        batch = GradientBatch.from_bytes(blob)
        return np.ascontiguousarray(batch.tensor, dtype="<f8").tobytes()
    return bytes(blob)
