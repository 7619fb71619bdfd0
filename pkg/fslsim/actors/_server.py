import logging
from typing import List, Optional

from fslsim import _CONSTANTS
from fslsim.contract import FSLGateway, IntermediateKind, IntermediateNotice
from fslsim.core import (
    ActivationBatch,
    GradientBatch,
    ParamVector,
    SplitModel,
    TrainConfig,
    server_step,
    sgd_step,
)

from ._mailbox import BlobTransport
from ._trace import RoundTrace

logger = logging.getLogger(__name__)


class ServerActor:
    """
    The server entity: runs ``f_s`` on every client's activations and returns the
    activation gradients. ``f_s`` parameters never leave this actor.

    Parameters
    ----------
    gateway
        Gateway bound to the server identity.
    model
        Shared split architecture.
    fs_params
        Initial ``f_s`` parameters.
    transport
        Blob routing shared by all actors.
    config
        Training configuration; ``eta_s`` is used.
    clock
        Timing source.
    """

    def __init__(
        self,
        gateway: FSLGateway,
        model: SplitModel,
        fs_params: ParamVector,
        transport: BlobTransport,
        config: TrainConfig,
        clock,
    ):
        self.gateway = gateway
        self.server_id = gateway.identity.actor_id
        self.model = model
        self.params = fs_params
        self.transport = transport
        self.config = config
        self.clock = clock
        self.activation_events = gateway.ledger.subscribe(
            _CONSTANTS.INTERMEDIATE_ADDED, gateway.identity
        )

    def register(self, capabilities: str = ""):
        self.gateway.register_server(self.server_id, capabilities).raise_for_status()

    def _pending(self, round_id: int) -> List[IntermediateNotice]:
        notices = []
        for event in self.activation_events.drain():
            notice = IntermediateNotice.from_bytes(event.payload)
            if notice.round_id != round_id:
                logger.warning(
                    "Skipping activation of {} for round {} during round {}.".format(
                        notice.client_id, notice.round_id, round_id
                    )
                )
                continue
            notices.append(notice)
        return sorted(notices, key=lambda n: n.client_id)

    def process_round(self, round_id: int, trace: RoundTrace) -> int:
        """
        Drain the round's activations, answer each with its gradient, then apply one
        ``f_s`` update with the summed parameter gradient.

        Returns
        -------
        Number of activation batches processed.
        """
        notices = self._pending(round_id)
        if not notices:
            return 0
        grad_sum: Optional[ParamVector] = None
        losses = []
        for notice in notices:
            ref = self.gateway.get_intermediate_data_hash(
                round_id, notice.client_id, IntermediateKind.ACTIVATION
            )
            if ref.data_hash != notice.data_hash:
                raise ValueError("activation reference does not match its event")
            activations = ActivationBatch.from_bytes(
                self.transport.fetch(ref.data_hash, notice.tx_id)
            )
            with self.clock.measure(activations.batch_size) as span:
                step = server_step(self.model, self.params, activations.tensor, activations.labels)
                grad_sum = (
                    step.grad_fs
                    if grad_sum is None
                    else grad_sum.with_values(grad_sum.values + step.grad_fs.values)
                )
                blob = GradientBatch(round_id, notice.client_id, step.grad_activations).to_bytes()
            trace.server_batch_s += span.seconds
            trace.add_bytes("gradient", len(blob))
            losses.append(step.loss)

            cid, transient, via_mailbox = self.transport.ship(blob)
            with self.clock.measure() as latency:
                record = self.gateway.add_gradients(notice.client_id, round_id, cid, transient)
            trace.add_latency("addGradients", latency.seconds)
            record.raise_for_status()
            if via_mailbox:
                self.transport.mailbox.post(record.tx_id, blob)

        with self.clock.measure() as span:
            self.params = sgd_step(self.params, grad_sum, self.config.eta_s)
        trace.server_batch_s += span.seconds
        trace.server_loss = sum(losses) / len(losses)
        return len(notices)

    def close(self):
        self.activation_events.close()
