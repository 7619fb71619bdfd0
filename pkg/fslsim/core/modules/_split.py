import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import torch
from torch import nn as nn

from .._params import ParamVector
from ._base import LayerSpec, build_layers, glorot_uniform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitModel:
    """
    A network cut into a client part ``f_c`` and a server part ``f_s``.

    Parameters
    ----------
    name
        Architecture name.
    fc_layers
        Layers run by the clients.
    fs_layers
        Layers run by the server entity.
    input_shape
        Shape of one input sample.
    n_classes
        Number of output logits.
    split_label
        Human-readable description of the cut.
    """

    name: str
    fc_layers: Tuple[LayerSpec, ...]
    fs_layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, ...]
    n_classes: int
    split_label: str = ""
    _modules: Dict[str, nn.Module] = field(default_factory=dict, compare=False, repr=False)

    @property
    def split_index(self) -> int:
        """Position of the cut in the composed layer list."""
        return len(self.fc_layers)

    @property
    def layers(self) -> Tuple[LayerSpec, ...]:
        return self.fc_layers + self.fs_layers

    def _module(self, part: str) -> nn.Module:
        # modules are templates for functional_call; their own weights are never used
        if part not in self._modules:
            if part == "fc":
                module = build_layers(self.fc_layers)
            elif part == "fs":
                module = build_layers(self.fs_layers, offset=self.split_index)
            else:
                module = build_layers(self.layers)
            self._modules[part] = module
        return self._modules[part]

    @property
    def client_module(self) -> nn.Module:
        return self._module("fc")

    @property
    def server_module(self) -> nn.Module:
        return self._module("fs")

    @property
    def monolithic_module(self) -> nn.Module:
        return self._module("all")

    def spec_bytes(self, part: str) -> bytes:
        """Canonical JSON description of one part, published off-chain."""
        layers = {"fc": self.fc_layers, "fs": self.fs_layers}[part]
        spec = {
            "model": self.name,
            "part": part,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "split": self.split_label,
            "layers": [layer.to_dict() for layer in layers],
        }
        return json.dumps(spec, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def fc_param_count(self) -> int:
        return sum(p.numel() for p in self.client_module.parameters())

    def fs_param_count(self) -> int:
        return sum(p.numel() for p in self.server_module.parameters())

    def init_params(self, seed: int) -> Tuple[ParamVector, ParamVector]:
        random_state = np.random.RandomState(seed)
        composed = build_layers(self.layers)
        glorot_uniform(composed, self.layers, random_state)
        state = composed.state_dict()
        fc_names = set(self.client_module.state_dict())
        fc = ParamVector.from_state_dict({k: v for k, v in state.items() if k in fc_names})
        fs = ParamVector.from_state_dict({k: v for k, v in state.items() if k not in fc_names})
        return fc, fs


def _tiny_mlp(dims: Sequence[int] = (2, 16, 16, 3)) -> SplitModel:
    dims = tuple(int(d) for d in dims)
    if len(dims) < 3 or min(dims) < 1:
        raise ValueError("tiny-mlp needs at least input, hidden and output sizes")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        layers.append(LayerSpec("dense", n_in, n_out))
        if i < len(dims) - 2:
            layers.append(LayerSpec("relu"))
    # cut after the first relu
    return SplitModel(
        "tiny-mlp",
        tuple(layers[:2]),
        tuple(layers[2:]),
        (dims[0],),
        dims[-1],
        "after first relu",
    )


def _mnist_cnn_5(channels: Sequence[int] = (32, 64), hidden: int = 128) -> SplitModel:
    c1, c2 = channels
    fc = (
        LayerSpec("conv", 1, c1, kernel=5, padding=2),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=2),
    )
    fs = (
        LayerSpec("conv", c1, c2, kernel=5, padding=2),
        LayerSpec("relu"),
        LayerSpec("maxpool", kernel=2),
        LayerSpec("flatten"),
        LayerSpec("dense", c2 * 7 * 7, hidden),
        LayerSpec("relu"),
        LayerSpec("dense", hidden, 10),
    )
    return SplitModel("mnist-cnn-5", fc, fs, (1, 28, 28), 10, "after first pooling layer")


ARCHITECTURES: Dict[str, Callable[..., SplitModel]] = {
    "tiny-mlp": _tiny_mlp,
    "mnist-cnn-5": _mnist_cnn_5,
}


def build_model(
    spec: str, seed: int = 0, **kwargs
) -> Tuple[SplitModel, ParamVector, ParamVector]:
    """
    Build a split architecture and its seeded initial parameters.

    Parameters
    ----------
    spec
        ``"tiny-mlp"`` or ``"mnist-cnn-5"``.
    seed
        Seed of the initialization.
    **kwargs
        Architecture options, e.g. ``dims=(2, 4, 3)`` for ``tiny-mlp``.

    Returns
    -------
    The model with its client and server parameters.
    """
    try:
        factory = ARCHITECTURES[spec]
    except KeyError:
        raise ValueError(
            "unknown model spec '{}', expected one of {}".format(spec, sorted(ARCHITECTURES))
        ) from None
    model = factory(**kwargs)
    fc, fs = model.init_params(seed)
    logger.debug(
        "Built {} with {} client and {} server parameters.".format(spec, len(fc), len(fs))
    )
    return model, fc, fs


def input_tensor(model: SplitModel, inputs) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(inputs, dtype=np.float64))
    if tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ValueError(
            "input shape {} does not match {}".format(tuple(x.shape[1:]), model.input_shape)
        )
    return x


def model_from_spec_bytes(fc_spec: bytes, fs_spec: bytes) -> SplitModel:
    """Rebuild a model from its two published part descriptions."""
    fc, fs = json.loads(fc_spec.decode("utf-8")), json.loads(fs_spec.decode("utf-8"))
    if fc["model"] != fs["model"] or (fc["part"], fs["part"]) != ("fc", "fs"):
        raise ValueError("spec parts do not belong together")
    return SplitModel(
        fc["model"],
        tuple(LayerSpec(**layer) for layer in fc["layers"]),
        tuple(LayerSpec(**layer) for layer in fs["layers"]),
        tuple(fc["input_shape"]),
        int(fc["n_classes"]),
        fc["split"],
    )

