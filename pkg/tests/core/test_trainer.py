import numpy as np
import pytest

from fslsim.core import MonolithicTrainer, TrainConfig, build_model
from fslsim.data import synthetic_gaussians


def test_monolithic_trainer():
    train, test = synthetic_gaussians(n=600, n_test=150, seed=0)
    model, fc, fs = build_model("tiny-mlp", seed=0)
    config = TrainConfig(eta_c=0.1, eta_s=0.1, batch_size=32, epochs=10, seed=0)
    trainer = MonolithicTrainer(model, fc, fs, train, test, config, silent=True)
    history = trainer.train()

    assert len(history["accuracy_test"]) == 11
    assert len(history["loss_train"]) == 10
    assert trainer.n_iter == 10 * int(np.ceil(600 / 32))
    assert history["accuracy_test"][-1] > history["accuracy_test"][0]
    assert history["accuracy_test"][-1] >= 0.85
    assert trainer.fc_params != fc

    calls = []
    trainer.train(n_epochs=1, on_iteration_end=lambda t: calls.append(t.n_iter))
    assert len(calls) == int(np.ceil(600 / 32))
    assert len(history["accuracy_test"]) == 12


def test_trainer_is_deterministic():
    train, test = synthetic_gaussians(n=300, n_test=60, seed=1)
    runs = []
    for _ in range(2):
        model, fc, fs = build_model("tiny-mlp", seed=4)
        trainer = MonolithicTrainer(
            model, fc, fs, train, test, TrainConfig(epochs=2, seed=4), silent=True
        )
        trainer.train()
        runs.append((trainer.fc_params, trainer.fs_params))
    assert runs[0] == runs[1]


def test_nan_losses_abort():
    train, _ = synthetic_gaussians(n=60, n_test=0, seed=0)
    model, fc, fs = build_model("tiny-mlp")
    trainer = MonolithicTrainer(model, fc, fs, train, max_nans=3, silent=True)
    trainer.current_loss = float("nan")
    trainer.check_training_status()
    trainer.check_training_status()
    with pytest.raises(ValueError, match="lower learning rate"):
        trainer.check_training_status()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(eta_c=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(aggregation_every=0)
    assert TrainConfig().to_dict()["eta_s"] == 0.05
