import logging
import time
from collections import defaultdict
from typing import Callable, Optional

import numpy as np

from fslsim._utils import track
from fslsim.data import Dataset

from .._config import TrainConfig
from .._functional import batch_indices, evaluate, monolithic_loss_and_grad, sgd_step
from .._params import ParamVector
from ..modules import SplitModel

logger = logging.getLogger(__name__)


class MonolithicTrainer:
    """
    Minibatch SGD of the composed ``f_c`` then ``f_s`` network on pooled data.

    This is the centralized baseline the split runs are compared against. The two
    halves keep separate learning rates so that a single-client split run with the
    same configuration follows the same trajectory.

    Parameters
    ----------
    model
        Split architecture; trained as one network.
    fc_params
        Initial client-part parameters.
    fs_params
        Initial server-part parameters.
    train_set
        Training data.
    test_set
        Data for per-epoch accuracy and loss. Default: ``None``.
    config
        Learning rates, batch size, epochs and seed.
    silent
        If True, disables progress bar.
    max_nans
        Consecutive non-finite losses tolerated before aborting.
    """

    def __init__(
        self,
        model: SplitModel,
        fc_params: ParamVector,
        fs_params: ParamVector,
        train_set: Dataset,
        test_set: Optional[Dataset] = None,
        config: Optional[TrainConfig] = None,
        silent: bool = False,
        max_nans: int = 10,
    ):
        self.model = model
        self.fc_params = fc_params
        self.fs_params = fs_params
        self.train_set = train_set
        self.test_set = test_set
        self.config = config if config is not None else TrainConfig()
        self.random_state = np.random.RandomState(self.config.seed)

        self.epoch = -1
        self.n_iter = 0
        self.training_time = 0.0
        self.current_loss = None
        self.max_nans = max_nans
        self.nan_counter = 0
        self.history = defaultdict(list)
        self.silent = silent

    def compute_metrics(self):
        if self.test_set is None:
            return
        accuracy, loss = evaluate(
            self.model, self.fc_params, self.fs_params, self.test_set.X, self.test_set.y
        )
        self.history["accuracy_test"].append(accuracy)
        self.history["loss_test"].append(loss)
        logger.debug(
            "epoch {}: test accuracy {:.4f}, loss {:.4f}".format(self.epoch + 1, accuracy, loss)
        )

    def train(
        self,
        n_epochs: Optional[int] = None,
        on_iteration_end: Optional[Callable[["MonolithicTrainer"], None]] = None,
    ):
        """
        Run ``n_epochs`` passes (default ``config.epochs``).

        ``on_iteration_end`` is called with the trainer after every parameter update.
        """
        begin = time.time()
        n_epochs = self.config.epochs if n_epochs is None else n_epochs
        if not self.history:
            self.compute_metrics()
        for self.epoch in track(
            range(n_epochs), description="Training baseline...", disable=self.silent
        ):
            epoch_loss, n_seen = 0.0, 0
            for idx in batch_indices(
                len(self.train_set), self.config.batch_size, self.random_state
            ):
                self.on_training_loop(self.train_set.X[idx], self.train_set.y[idx])
                self.check_training_status()
                self.n_iter += 1
                epoch_loss += self.current_loss * len(idx)
                n_seen += len(idx)
                if on_iteration_end is not None:
                    on_iteration_end(self)
            self.history["loss_train"].append(epoch_loss / max(n_seen, 1))
            self.compute_metrics()
        self.training_time += time.time() - begin
        return self.history

    def on_training_loop(self, x, y):
        loss, grad_fc, grad_fs = monolithic_loss_and_grad(
            self.model, self.fc_params, self.fs_params, x, y
        )
        self.current_loss = loss
        if np.isfinite(loss):
            self.fc_params = sgd_step(self.fc_params, grad_fc, self.config.eta_c)
            self.fs_params = sgd_step(self.fs_params, grad_fs, self.config.eta_s)

    def check_training_status(self):
        """
        Checks if loss is admissible.

        Training stops with a ValueError after ``max_nans`` consecutive non-finite losses.
        """
        if not np.isfinite(self.current_loss):
            logger.warning("Model training loss was NaN")
            self.nan_counter += 1
        else:
            self.nan_counter = 0
        if self.nan_counter >= self.max_nans:
            raise ValueError(
                "Loss was NaN {} consecutive times: the model is not training properly. "
                "Consider using a lower learning rate.".format(self.max_nans)
            )
