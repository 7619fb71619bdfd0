"""
Pure split-learning numerics.

Parameters live in :class:`ParamVector` objects and are bound to the layer templates of
a :class:`SplitModel` with ``torch.func.functional_call``, so every function here is a
deterministic function of its arguments.
"""
import logging
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch.func import functional_call

from ._params import ActivationBatch, GradientBatch, ParamVector
from .modules import SplitModel
from .modules._split import input_tensor

logger = logging.getLogger(__name__)


def _bind(params: ParamVector, requires_grad: bool = False):
    state = params.to_state_dict()
    if requires_grad:
        for tensor in state.values():
            tensor.requires_grad_(True)
    return state


def _labels(model: SplitModel, labels, n: int) -> torch.Tensor:
    y = torch.as_tensor(np.asarray(labels, dtype=np.int64))
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError("expected {} labels, got shape {}".format(n, tuple(y.shape)))
    if n and (int(y.min()) < 0 or int(y.max()) >= model.n_classes):
        raise ValueError("labels must be in [0, {})".format(model.n_classes))
    return y


def _activation_tensor(model: SplitModel, activations) -> torch.Tensor:
    if isinstance(activations, ActivationBatch):
        activations = activations.tensor
    z = torch.as_tensor(np.asarray(activations, dtype=np.float64))
    expected = cut_shape(model)
    if tuple(z.shape[1:]) != expected:
        raise ValueError(
            "activation shape {} does not match cut {}".format(tuple(z.shape[1:]), expected)
        )
    return z


def cut_shape(model: SplitModel) -> Tuple[int, ...]:
    """Per-sample shape of the activations crossing the cut."""
    with torch.no_grad():
        sample = torch.zeros((1,) + tuple(model.input_shape), dtype=torch.float64)
        return tuple(model.client_module(sample).shape[1:])


def forward_client(
    model: SplitModel,
    fc_params: ParamVector,
    inputs,
    round_id: int = 0,
    client_id: str = "",
    labels=None,
) -> ActivationBatch:
    """Cut-layer activations ``f_c(inputs)``."""
    x = input_tensor(model, inputs)
    with torch.no_grad():
        z = functional_call(model.client_module, _bind(fc_params), (x,))
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    return ActivationBatch(round_id, client_id, z.numpy().copy(), labels)


def forward_server(
    model: SplitModel, fs_params: ParamVector, activations, labels
) -> Tuple[float, np.ndarray]:
    """
    Mean cross-entropy of ``f_s(activations)`` and the predicted classes.
    """
    z = _activation_tensor(model, activations)
    y = _labels(model, labels, z.shape[0])
    with torch.no_grad():
        logits = functional_call(model.server_module, _bind(fs_params), (z,))
        loss = F.cross_entropy(logits, y)
    return float(loss), logits.argmax(dim=-1).numpy()


class ServerGradients(NamedTuple):
    loss: float
    grad_fs: ParamVector
    grad_activations: np.ndarray


def server_step(
    model: SplitModel, fs_params: ParamVector, activations, labels
) -> ServerGradients:
    """Loss, ``f_s`` parameter gradient and activation gradient in one pass."""
    z = _activation_tensor(model, activations).clone().requires_grad_(True)
    y = _labels(model, labels, z.shape[0])
    state = _bind(fs_params, requires_grad=True)
    logits = functional_call(model.server_module, state, (z,))
    loss = F.cross_entropy(logits, y)
    grads = torch.autograd.grad(loss, [z] + list(state.values()))
    grad_fs = ParamVector.from_tensors(list(state), grads[1:])
    return ServerGradients(float(loss), grad_fs, grads[0].numpy().copy())


def backward_server(
    model: SplitModel, fs_params: ParamVector, activations, labels
) -> Tuple[ParamVector, GradientBatch]:
    """
    Gradients of the server loss with respect to ``fs_params`` and the activations.
    """
    step = server_step(model, fs_params, activations, labels)
    round_id = getattr(activations, "round_id", 0)
    client_id = getattr(activations, "client_id", "")
    return step.grad_fs, GradientBatch(round_id, client_id, step.grad_activations)


def backward_client(
    model: SplitModel, fc_params: ParamVector, inputs, grad_activations
) -> ParamVector:
    """Chain rule through ``f_c`` given the gradient at the cut."""
    if isinstance(grad_activations, GradientBatch):
        grad_activations = grad_activations.tensor
    x = input_tensor(model, inputs)
    g = torch.as_tensor(np.asarray(grad_activations, dtype=np.float64))
    state = _bind(fc_params, requires_grad=True)
    z = functional_call(model.client_module, state, (x,))
    if tuple(z.shape) != tuple(g.shape):
        raise ValueError(
            "gradient shape {} does not match activations {}".format(
                tuple(g.shape), tuple(z.shape)
            )
        )
    grads = torch.autograd.grad(z, list(state.values()), grad_outputs=g, allow_unused=True)
    grads = [
        torch.zeros_like(t) if gr is None else gr for t, gr in zip(state.values(), grads)
    ]
    return ParamVector.from_tensors(list(state), grads)


def sgd_step(params: ParamVector, grad: ParamVector, eta: float) -> ParamVector:
    """``params - eta * grad``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    params.check_compatible(grad)
    return params.with_values(params.values - eta * grad.values)


def fedavg(updates: Sequence[Tuple[ParamVector, float]]) -> ParamVector:
    """
    Dataset-size weighted average of client parameters.

    Values are accumulated as a running weighted mean in list order, so identical
    inputs return that input exactly and equal inputs in equal order give equal bytes.

    Parameters
    ----------
    updates
        ``(params, weight)`` pairs; weights must be positive.
    """
    updates = list(updates)
    if not updates:
        raise ValueError("fedavg needs at least one update")
    first = updates[0][0]
    for params, weight in updates:
        first.check_compatible(params)
        if not weight > 0:
            raise ValueError("weights must be positive, got {}".format(weight))
    mean = first.values.copy()
    total = float(updates[0][1])
    for params, weight in updates[1:]:
        total += float(weight)
        mean += (params.values - mean) * (float(weight) / total)
    return first.with_values(mean)


def weighted_mean_oracle(updates: Iterable[Tuple[ParamVector, float]]) -> np.ndarray:
    """Direct ``sum(w_i * p_i) / sum(w_i)``, for checking :func:`fedavg`."""
    updates = list(updates)
    weights = np.array([w for _, w in updates], dtype=np.float64)
    stacked = np.stack([p.values for p, _ in updates])
    return (weights[:, None] * stacked).sum(axis=0) / weights.sum()


def monolithic_loss_and_grad(
    model: SplitModel, fc_params: ParamVector, fs_params: ParamVector, inputs, labels
) -> Tuple[float, ParamVector, ParamVector]:
    """Loss and gradients of the unsplit network."""
    x = input_tensor(model, inputs)
    y = _labels(model, labels, x.shape[0])
    state = _bind(fc_params, requires_grad=True)
    fs_state = _bind(fs_params, requires_grad=True)
    state.update(fs_state)
    logits = functional_call(model.monolithic_module, state, (x,))
    loss = F.cross_entropy(logits, y)
    grads = dict(zip(state, torch.autograd.grad(loss, list(state.values()))))
    grad_fc = ParamVector.from_tensors(
        [n for n, _ in fc_params.layout], [grads[n] for n, _ in fc_params.layout]
    )
    grad_fs = ParamVector.from_tensors(
        [n for n, _ in fs_params.layout], [grads[n] for n, _ in fs_params.layout]
    )
    return float(loss), grad_fc, grad_fs


def predict(
    model: SplitModel, fc_params: ParamVector, fs_params: ParamVector, inputs
) -> np.ndarray:
    x = input_tensor(model, inputs)
    state = _bind(fc_params)
    state.update(_bind(fs_params))
    with torch.no_grad():
        logits = functional_call(model.monolithic_module, state, (x,))
    return logits.argmax(dim=-1).numpy()


def evaluate(
    model: SplitModel,
    fc_params: ParamVector,
    fs_params: ParamVector,
    inputs,
    labels,
    batch_size: Optional[int] = 1024,
) -> Tuple[float, float]:
    """
    Test accuracy and sample-weighted mean loss of the composed model.

    Batches go through ``forward_client`` then ``forward_server``, the same path the
    protocol uses.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate on an empty test set")
    batch_size = batch_size or n
    correct, loss_sum = 0, 0.0
    for start in range(0, n, batch_size):
        x, y = inputs[start : start + batch_size], labels[start : start + batch_size]
        z = forward_client(model, fc_params, x)
        loss, predictions = forward_server(model, fs_params, z, y)
        correct += int((predictions == y).sum())
        loss_sum += loss * len(y)
    return correct / n, loss_sum / n


def batch_indices(
    n: int, batch_size: int, random_state: np.random.RandomState
) -> List[np.ndarray]:
    """One shuffled pass over ``range(n)`` in batches; the last batch may be short."""
    order = random_state.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]
