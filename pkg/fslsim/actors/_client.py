import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from fslsim import _CONSTANTS
from fslsim.contract import (
    FSLGateway,
    GlobalModelRecord,
    IntermediateKind,
    IntermediateNotice,
    MemberHash,
    decode_member_hashes,
)
from fslsim.core import (
    GradientBatch,
    ParamVector,
    SplitModel,
    TrainConfig,
    backward_client,
    batch_indices,
    deserialize_params,
    fedavg,
    forward_client,
    serialize_params,
    sgd_step,
)
from fslsim.data import Dataset
from fslsim.store import Cid

from ._mailbox import BlobTransport
from ._trace import RoundTrace

logger = logging.getLogger(__name__)


@dataclass
class Contribution:
    """A participant's answer to an aggregation task."""

    client_id: str
    aggregation_id: str
    global_hash: Cid
    height: int
    seconds: float


class ClientActor:
    """
    One data owner: runs ``f_c`` on its local batches and takes part in aggregation.

    Parameters
    ----------
    gateway
        Gateway bound to the client's identity.
    dataset
        Local training data.
    model
        Shared split architecture.
    transport
        Blob routing shared by all actors.
    config
        Training configuration.
    index
        Position of the client; its batch order is seeded with ``config.seed + index``.
    clock
        Timing source.
    """

    def __init__(
        self,
        gateway: FSLGateway,
        dataset: Dataset,
        model: SplitModel,
        transport: BlobTransport,
        config: TrainConfig,
        index: int,
        clock,
    ):
        self.gateway = gateway
        self.client_id = gateway.identity.actor_id
        self.dataset = dataset
        self.model = model
        self.transport = transport
        self.config = config
        self.clock = clock
        self.random_state = np.random.RandomState(config.seed + index)

        self.params: Optional[ParamVector] = None
        self.global_params: Optional[ParamVector] = None
        self.global_record: Optional[GlobalModelRecord] = None
        self.dropped = False
        self.corrupt = False
        self._corruption_scale = 1e-3 * (index + 1)

        self._batches: List[np.ndarray] = []
        self._cursor = 0
        self._inflight: Dict[int, np.ndarray] = {}

        ledger, identity = gateway.ledger, gateway.identity
        self.gradient_events = ledger.subscribe(_CONSTANTS.GRADIENT_ADDED, identity)
        self.task_events = ledger.subscribe(_CONSTANTS.AGGREGATION_START, identity)
        self.outcome_events = ledger.subscribe(_CONSTANTS.GLOBAL_MODEL_UPDATED, identity)
        self.failure_events = ledger.subscribe(_CONSTANTS.AGGREGATION_FAILED, identity)

    def __repr__(self):
        return "ClientActor({}, n={})".format(self.client_id, len(self.dataset))

    @property
    def dataset_size(self) -> int:
        return len(self.dataset)

    def register(self):
        self.gateway.register_client(self.client_id, self.dataset_size).raise_for_status()

    def sync_global(self) -> GlobalModelRecord:
        """Adopt the committed global ``f_c`` parameters."""
        record = self.gateway.get_current_global_model()
        blob = self.transport.fetch(record.global_hash)
        layout = self.params.layout if self.params is not None else None
        params = deserialize_params(blob, layout)
        self.params = self.global_params = params
        self.global_record = record
        return record

    # local training

    def start_epoch(self):
        self._batches = batch_indices(self.dataset_size, self.config.batch_size, self.random_state)
        self._cursor = 0

    @property
    def rounds_per_epoch(self) -> int:
        return -(-self.dataset_size // self.config.batch_size)

    @property
    def has_batch(self) -> bool:
        return not self.dropped and self._cursor < len(self._batches)

    def forward(self, round_id: int, trace: RoundTrace):
        """Compute and submit the activations of the next local batch."""
        idx = self._batches[self._cursor]
        self._cursor += 1
        with self.clock.measure(len(idx)) as span:
            activations = forward_client(
                self.model,
                self.params,
                self.dataset.X[idx],
                round_id,
                self.client_id,
                labels=self.dataset.y[idx],
            )
            blob = activations.to_bytes()
        trace.fc_forward_s[self.client_id] = span.seconds
        trace.add_bytes("activation", len(blob))

        cid, transient, via_mailbox = self.transport.ship(blob)
        with self.clock.measure() as span:
            record = self.gateway.add_intermediate_data(
                round_id, cid, transient, metadata="batch={}".format(len(idx))
            )
        trace.add_latency("addIntermediateData", span.seconds)
        record.raise_for_status()
        if via_mailbox:
            self.transport.mailbox.post(record.tx_id, blob)
        self._inflight[round_id] = idx
        return record

    def backward(self, trace: RoundTrace) -> int:
        """Apply every gradient addressed to this client; returns how many."""
        applied = 0
        for event in self.gradient_events.drain():
            notice = IntermediateNotice.from_bytes(event.payload)
            if notice.client_id != self.client_id:
                continue
            idx = self._inflight.pop(notice.round_id, None)
            if idx is None:
                logger.warning(
                    "{} got a gradient for round {} it did not send.".format(
                        self.client_id, notice.round_id
                    )
                )
                continue
            ref = self.gateway.get_intermediate_data_hash(
                notice.round_id, self.client_id, IntermediateKind.GRADIENT
            )
            if ref.data_hash != notice.data_hash:
                raise ValueError("gradient reference does not match its event")
            gradient = GradientBatch.from_bytes(self.transport.fetch(ref.data_hash, notice.tx_id))
            with self.clock.measure(len(idx)) as span:
                grad_fc = backward_client(
                    self.model, self.params, self.dataset.X[idx], gradient.tensor
                )
                self.params = sgd_step(self.params, grad_fc, self.config.eta_c)
            trace.fc_backward_s[self.client_id] = (
                trace.fc_backward_s.get(self.client_id, 0.0) + span.seconds
            )
            applied += 1
        return applied

    # aggregation

    def submit_model_hash(self, round_id: int, aggregation_id: str, trace: RoundTrace) -> Cid:
        blob = serialize_params(self.params)
        cid = self.transport.publish(blob)
        trace.add_bytes("params", len(blob))
        with self.clock.measure() as span:
            record = self.gateway.submit_client_model_hash(round_id, aggregation_id, cid)
        trace.add_latency("submitClientModelHash", span.seconds)
        record.raise_for_status()
        return cid

    def _member_params(self, members: Tuple[MemberHash, ...]) -> List[Tuple[ParamVector, float]]:
        updates = []
        for member in members:
            blob = self.transport.fetch(member.param_hash)
            updates.append(
                (deserialize_params(blob, self.params.layout), float(member.dataset_size))
            )
        return updates

    def aggregate(self, trace: RoundTrace) -> Optional[Contribution]:
        """
        Answer the pending aggregation task: fetch every member's parameters, average
        them in member order and commit the hash of the result.
        """
        contribution = None
        for event in self.task_events.drain():
            aggregation_id, round_id, members = decode_member_hashes(event.payload)
            if self.client_id not in [m.client_id for m in members]:
                continue
            updates = self._member_params(members)
            with self.clock.measure(len(members)) as span:
                averaged = fedavg(updates)
                if self.corrupt:
                    averaged = averaged.with_values(averaged.values + self._corruption_scale)
                blob = serialize_params(averaged)
            cid = self.transport.publish(blob)
            trace.add_bytes("params", len(blob))
            with self.clock.measure() as latency:
                record = self.gateway.commit_global_model_hash(aggregation_id, round_id, cid)
            trace.add_latency("commitGlobalModelHash", latency.seconds)
            record.raise_for_status()
            contribution = Contribution(
                self.client_id, aggregation_id, cid, record.height, span.seconds
            )
        return contribution

    def close_aggregation(self, aggregation_id: str, round_id: int, endorsers, trace: RoundTrace):
        with self.clock.measure() as span:
            record = self.gateway.end_global_model(aggregation_id, round_id, endorsers=endorsers)
        trace.add_latency("endGlobalModel", span.seconds)
        return record.raise_for_status()

    def on_outcome(self) -> Optional[bool]:
        """
        Follow the aggregation outcome: adopt the new global model when one was
        committed, otherwise fall back to the previous one.
        """
        if self.outcome_events.drain():
            self.sync_global()
            return True
        if self.failure_events.drain():
            self.params = self.global_params
            return False
        return None

    def close(self):
        for stream in (
            self.gradient_events,
            self.task_events,
            self.outcome_events,
            self.failure_events,
        ):
            stream.close()
