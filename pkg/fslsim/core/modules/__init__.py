from ._base import LayerSpec, build_layers, count_params, glorot_uniform
from ._split import ARCHITECTURES, SplitModel, build_model, model_from_spec_bytes

__all__ = [
    "ARCHITECTURES",
    "LayerSpec",
    "SplitModel",
    "build_layers",
    "build_model",
    "count_params",
    "glorot_uniform",
    "model_from_spec_bytes",
]
