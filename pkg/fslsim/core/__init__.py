from ._config import TrainConfig
from ._functional import (
    ServerGradients,
    backward_client,
    backward_server,
    batch_indices,
    cut_shape,
    evaluate,
    fedavg,
    forward_client,
    forward_server,
    monolithic_loss_and_grad,
    predict,
    server_step,
    sgd_step,
    weighted_mean_oracle,
)
from ._params import (
    ActivationBatch,
    GradientBatch,
    ParamVector,
    deserialize_params,
    private_payload,
    serialize_params,
)
from .modules import ARCHITECTURES, LayerSpec, SplitModel, build_model
from .trainers import MonolithicTrainer

__all__ = [
    "ARCHITECTURES",
    "ActivationBatch",
    "GradientBatch",
    "LayerSpec",
    "MonolithicTrainer",
    "ParamVector",
    "ServerGradients",
    "SplitModel",
    "TrainConfig",
    "backward_client",
    "backward_server",
    "batch_indices",
    "build_model",
    "cut_shape",
    "deserialize_params",
    "evaluate",
    "fedavg",
    "forward_client",
    "forward_server",
    "monolithic_loss_and_grad",
    "predict",
    "private_payload",
    "serialize_params",
    "server_step",
    "sgd_step",
    "weighted_mean_oracle",
]
