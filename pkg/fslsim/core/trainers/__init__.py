from .trainer import MonolithicTrainer

__all__ = ["MonolithicTrainer"]
