import collections
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
import torch
from torch import nn as nn


@dataclass(frozen=True)
class LayerSpec:
    """
    One layer of a split network.

    ``kind`` is one of ``dense``, ``conv``, ``relu``, ``maxpool`` or ``flatten``.
    Sizes that do not apply to a kind are left at 0.
    """

    kind: str
    n_in: int = 0
    n_out: int = 0
    kernel: int = 0
    padding: int = 0

    KINDS = ("dense", "conv", "relu", "maxpool", "flatten")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError("unknown layer kind '{}'".format(self.kind))

    @property
    def has_params(self) -> bool:
        return self.kind in ("dense", "conv")

    def build(self) -> nn.Module:
        if self.kind == "dense":
            return nn.Linear(self.n_in, self.n_out)
        if self.kind == "conv":
            return nn.Conv2d(self.n_in, self.n_out, self.kernel, padding=self.padding)
        if self.kind == "relu":
            return nn.ReLU()
        if self.kind == "maxpool":
            return nn.MaxPool2d(self.kernel)
        return nn.Flatten()

    def fans(self) -> Tuple[int, int]:
        if self.kind == "conv":
            area = self.kernel * self.kernel
            return self.n_in * area, self.n_out * area
        return self.n_in, self.n_out

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v or k == "kind"}


def build_layers(specs: Sequence[LayerSpec], offset: int = 0) -> nn.Sequential:
    """
    ``nn.Sequential`` of float64 layers named ``Layer_{i}``, numbered from ``offset``.

    Numbering from an offset keeps names unique when the client and server parts are
    composed into one network.
    """
    return nn.Sequential(
        collections.OrderedDict(
            [("Layer_{}".format(offset + i), spec.build()) for i, spec in enumerate(specs)]
        )
    ).double()


def glorot_uniform(
    module: nn.Sequential, specs: Sequence[LayerSpec], random_state: np.random.RandomState
):
    """
    Weights uniform in ``±sqrt(6 / (fan_in + fan_out))``, biases zero.

    Layers are visited in order so a seed fixes every value.
    """
    with torch.no_grad():
        for layer, spec in zip(module, specs):
            if not spec.has_params:
                continue
            fan_in, fan_out = spec.fans()
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = random_state.uniform(-limit, limit, size=tuple(layer.weight.shape))
            layer.weight.copy_(torch.from_numpy(weight))
            layer.bias.zero_()


def count_params(specs: Iterable[LayerSpec]) -> int:
    return sum(p.numel() for p in build_layers(list(specs)).parameters())

