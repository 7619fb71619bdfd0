import numpy as np
import pytest

from fslsim.cli import verify_equivalence, verify_gradients
from fslsim.core import (
    ParamVector,
    backward_client,
    backward_server,
    batch_indices,
    build_model,
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

LAYOUT = (("w", (3, 2)), ("b", (2,)))


def _batch(model, n, seed=0):
    random_state = np.random.RandomState(seed)
    x = random_state.normal(size=(n,) + tuple(model.input_shape))
    y = random_state.randint(model.n_classes, size=n)
    return x, y


def _random_params(template, random_state, scale=1.0):
    return template.with_values(random_state.normal(scale=scale, size=len(template)))


def test_cut_shapes():
    model, fc, fs = build_model("tiny-mlp")
    assert cut_shape(model) == (16,)
    assert model.split_index == 2
    assert len(fc) == 2 * 16 + 16
    assert len(fs) == 16 * 16 + 16 + 16 * 3 + 3

    cnn, _, _ = build_model("mnist-cnn-5")
    assert cut_shape(cnn) == (32, 14, 14)
    with pytest.raises(ValueError, match="unknown model spec"):
        build_model("resnet-18")


def test_split_forward_equals_monolithic():
    model, fc, fs = build_model("tiny-mlp", seed=3)
    x, y = _batch(model, 32)
    activations = forward_client(model, fc, x, round_id=4, client_id="client01", labels=y)
    assert activations.tensor.shape == (32, 16)
    assert (activations.round_id, activations.client_id) == (4, "client01")
    loss, predictions = forward_server(model, fs, activations, y)
    mono_loss, _, _ = monolithic_loss_and_grad(model, fc, fs, x, y)
    assert abs(loss - mono_loss) < 1e-9
    np.testing.assert_array_equal(predictions, predict(model, fc, fs, x))


def test_single_sample_matches_batch_row():
    model, fc, _ = build_model("tiny-mlp", seed=1)
    x, _ = _batch(model, 8)
    full = forward_client(model, fc, x).tensor
    for i in range(8):
        row = forward_client(model, fc, x[i : i + 1]).tensor
        np.testing.assert_allclose(row[0], full[i], rtol=0, atol=1e-12)


def test_split_gradients_equal_monolithic():
    model, fc0, fs0 = build_model("tiny-mlp")
    random_state = np.random.RandomState(0)
    for n in (1, 7, 32):
        fc = _random_params(fc0, random_state, 0.5)
        fs = _random_params(fs0, random_state, 0.5)
        x, y = _batch(model, n, seed=n)
        grad_fs, gradient = backward_server(model, fs, forward_client(model, fc, x), y)
        grad_fc = backward_client(model, fc, x, gradient)
        loss, mono_fc, mono_fs = monolithic_loss_and_grad(model, fc, fs, x, y)
        assert np.max(np.abs(grad_fc.values - mono_fc.values)) < 1e-9
        assert np.max(np.abs(grad_fs.values - mono_fs.values)) < 1e-9
        step = server_step(model, fs, forward_client(model, fc, x).tensor, y)
        assert abs(step.loss - loss) < 1e-9


def test_cnn_split_gradients_equal_monolithic():
    model, fc, fs = build_model("mnist-cnn-5", seed=0)
    x, y = _batch(model, 2)
    step = server_step(model, fs, forward_client(model, fc, x).tensor, y)
    grad_fc = backward_client(model, fc, x, step.grad_activations)
    loss, mono_fc, mono_fs = monolithic_loss_and_grad(model, fc, fs, x, y)
    assert abs(step.loss - loss) < 1e-9
    assert np.max(np.abs(grad_fc.values - mono_fc.values)) < 1e-9
    assert np.max(np.abs(step.grad_fs.values - mono_fs.values)) < 1e-9


def test_equivalence_suite():
    result = verify_equivalence(draws=100)
    assert result.passed, result.counterexample_frame()
    assert result.checked == 100
    assert result.metrics["max_abs_error"] < 1e-9


def test_finite_differences():
    result = verify_gradients(dims=(2, 4, 3), h=1e-5, tolerance=1e-4)
    assert result.passed, result.counterexample_frame()
    assert result.checked == (2 * 4 + 4) + (4 * 3 + 3)
    assert result.metrics["max_relative_error"] < 1e-4


def test_shape_and_label_checks():
    model, fc, fs = build_model("tiny-mlp")
    x, y = _batch(model, 4)
    with pytest.raises(ValueError, match="input shape"):
        forward_client(model, fc, np.zeros((4, 3)))
    with pytest.raises(ValueError, match="does not match cut"):
        forward_server(model, fs, np.zeros((4, 8)), y)
    with pytest.raises(ValueError, match="labels must be in"):
        forward_server(model, fs, forward_client(model, fc, x), np.array([0, 1, 2, 3]))
    with pytest.raises(ValueError, match="expected 4 labels"):
        forward_server(model, fs, forward_client(model, fc, x), y[:3])
    with pytest.raises(ValueError, match="gradient shape"):
        backward_client(model, fc, x, np.zeros((3, 16)))


def test_sgd_step():
    params = ParamVector(np.arange(8, dtype=float), LAYOUT)
    grad = ParamVector(np.ones(8), LAYOUT)
    np.testing.assert_array_equal(sgd_step(params, grad, 0.5).values, np.arange(8) - 0.5)
    with pytest.raises(ValueError):
        sgd_step(params, grad, 0.0)
    with pytest.raises(ValueError, match="layout mismatch"):
        sgd_step(params, ParamVector(np.ones(8), (("w", (8,)),)), 0.1)


def test_fedavg_hand_example():
    layout = (("w", (1,)),)
    zero = ParamVector(np.array([0.0]), layout)
    one = ParamVector(np.array([1.0]), layout)
    assert fedavg([(zero, 1), (one, 3)]).values.tolist() == [0.75]


def test_fedavg_against_oracle():
    random_state = np.random.RandomState(42)
    for _ in range(200):
        k = random_state.randint(2, 13)
        updates = [
            (ParamVector(random_state.normal(size=8), LAYOUT), random_state.uniform(0.1, 100))
            for _ in range(k)
        ]
        averaged = fedavg(updates)
        np.testing.assert_allclose(
            averaged.values, weighted_mean_oracle(updates), rtol=0, atol=1e-12
        )
        shuffled = [updates[i] for i in random_state.permutation(k)]
        np.testing.assert_allclose(fedavg(shuffled).values, averaged.values, rtol=0, atol=1e-12)
        assert fedavg(updates) == averaged


def test_fedavg_identical_inputs_fixed():
    params = ParamVector(np.random.RandomState(0).normal(size=8), LAYOUT)
    assert fedavg([(params, 3.0), (params, 7.0), (params, 1.0)]) == params
    assert fedavg([(params, 5)]) == params


def test_fedavg_rejects_bad_input():
    params = ParamVector(np.zeros(8), LAYOUT)
    with pytest.raises(ValueError, match="at least one"):
        fedavg([])
    with pytest.raises(ValueError, match="positive"):
        fedavg([(params, 1), (params, 0)])
    with pytest.raises(ValueError, match="layout mismatch"):
        fedavg([(params, 1), (ParamVector(np.zeros(8), (("v", (8,)),)), 1)])


def test_evaluate_matches_predictions():
    model, fc, fs = build_model("tiny-mlp", seed=2)
    x, y = _batch(model, 50, seed=5)
    accuracy, loss = evaluate(model, fc, fs, x, y, batch_size=7)
    assert accuracy == np.mean(predict(model, fc, fs, x) == y)
    full_accuracy, full_loss = evaluate(model, fc, fs, x, y, batch_size=None)
    assert full_accuracy == accuracy
    assert abs(full_loss - loss) < 1e-12
    assert abs(full_loss - monolithic_loss_and_grad(model, fc, fs, x, y)[0]) < 1e-12
    with pytest.raises(ValueError, match="empty test set"):
        evaluate(model, fc, fs, x[:0], y[:0])


def test_batch_indices():
    batches = batch_indices(10, 4, np.random.RandomState(0))
    assert [len(b) for b in batches] == [4, 4, 2]
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(10))
    again = batch_indices(10, 4, np.random.RandomState(0))
    assert all(np.array_equal(a, b) for a, b in zip(batches, again))
