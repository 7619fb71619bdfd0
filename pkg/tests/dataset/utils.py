from fslsim.core import MonolithicTrainer, TrainConfig, build_model
from fslsim.data import Dataset


def train_one_epoch(dataset: Dataset, model_spec: str = "tiny-mlp", **model_kwargs):
    model, fc, fs = build_model(model_spec, **model_kwargs)
    trainer = MonolithicTrainer(
        model, fc, fs, dataset, config=TrainConfig(batch_size=64, epochs=1), silent=True
    )
    trainer.train()
    return trainer
