import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Set, Tuple, Union

import numpy as np
import pandas as pd

from fslsim import _CONSTANTS
from fslsim._settings import settings
from fslsim._utils import track
from fslsim.contract import (
    DEFAULT_CONSENSUS,
    FSLNetwork,
    GlobalModelRecord,
    bootstrap_fsl_network,
    fsl_policies,
)
from fslsim.core import (
    ParamVector,
    build_model,
    deserialize_params,
    evaluate,
    serialize_params,
)
from fslsim.core.modules import model_from_spec_bytes
from fslsim.data import Dataset, DatasetPartition, mnist, partition, synthetic_gaussians
from fslsim.ledger import (
    AccessDeniedError,
    LedgerError,
    LedgerMetrics,
    TransactionRecord,
)
from fslsim.store import OffchainStore

from ._client import ClientActor
from ._clock import StepClock, WallClock
from ._config import ScenarioConfig
from ._mailbox import BlobTransport, PeerMailbox
from ._scheduler import make_scheduler
from ._server import ServerActor
from ._trace import METRICS_CSV_COLUMNS, ROUNDS_CSV_COLUMNS, RoundTrace, epoch_row

logger = logging.getLogger(__name__)

FAULT_KINDS = ("corrupt_aggregation", "drop_client", "unauthorized_read")


class RoundAbortedError(LedgerError):
    """A contract rejection stopped a round."""

    def __init__(self, round_id: int, cause: BaseException):
        super().__init__("round {} aborted: {}".format(round_id, cause))
        self.round_id = round_id
        self.cause = cause


@dataclass
class TrainingResult:
    """Artifacts of a finished run."""

    config: ScenarioConfig
    metrics: pd.DataFrame
    rounds: pd.DataFrame
    final_record: GlobalModelRecord
    global_params: ParamVector
    server_params: ParamVector
    ledger_metrics: LedgerMetrics
    records: List[TransactionRecord]
    initial_accuracy: float
    initial_loss: float
    traces: List[RoundTrace] = field(default_factory=list, repr=False)
    aggregations: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        if self.metrics.empty:
            return self.initial_accuracy
        return float(self.metrics["global_acc"].iloc[-1])

    @property
    def final_loss(self) -> float:
        if self.metrics.empty:
            return self.initial_loss
        return float(self.metrics["global_loss"].iloc[-1])


def load_scenario_data(config: ScenarioConfig) -> Tuple[Dataset, Dataset]:
    """Train and test sets named by the scenario."""
    kwargs = dict(config.dataset_kwargs)
    if config.dataset == "synthetic":
        kwargs.setdefault("seed", config.seed)
        return synthetic_gaussians(**kwargs)
    return mnist(**kwargs)


class FSLDriver:
    """
    Runs federated split learning rounds over a simulated permissioned network.

    Parameters
    ----------
    config
        Scenario to run.
    train_set
        Pooled training data, partitioned across the clients at setup.
    test_set
        Held-out data for the global model.
    store
        Off-chain store; default is a fresh store under ``fslsim.settings.store_dir``.
    audit
        Store receiving a copy of every private blob, for leak scans.
    silent
        If True, disables progress bar.
    collect_garbage
        Drop consumed blobs from the off-chain store after every round.

    Examples
    --------
    >>> driver = FSLDriver(config, train, test).setup()
    >>> trace = driver.run_round()
    >>> result = driver.run_training()
    """

    def __init__(
        self,
        config: ScenarioConfig,
        train_set: Dataset,
        test_set: Dataset,
        store: Optional[OffchainStore] = None,
        audit: Optional[OffchainStore] = None,
        silent: bool = True,
        collect_garbage: bool = True,
    ):
        self.config = config
        self.train_set = train_set
        self.test_set = test_set
        self.store = store if store is not None else OffchainStore()
        self.audit = audit
        self.silent = silent
        self.collect_garbage = collect_garbage

        self.clock = StepClock() if config.deterministic else WallClock()
        self.scheduler = make_scheduler(config.scheduler, config.n_clients)
        self.network: Optional[FSLNetwork] = None
        self.partition: Optional[DatasetPartition] = None
        self.clients: List[ClientActor] = []
        self.server: Optional[ServerActor] = None

        self.epoch = 0
        self.round_id = 0
        self.traces: List[RoundTrace] = []
        self.metric_rows: List[dict] = []
        self.aggregations: List[Tuple[str, str]] = []
        self.global_record: Optional[GlobalModelRecord] = None
        self.global_params: Optional[ParamVector] = None
        self.initial_accuracy = float("nan")
        self.initial_loss = float("nan")
        self._n_aggregations = 0
        self._pinned: Set[str] = set()
        self._readers: Set[str] = set()

    # setup

    def setup(self) -> "FSLDriver":
        """Bootstrap the channel, publish the model, register and sync every actor."""
        config = self.config
        consensus = (
            DEFAULT_CONSENSUS
            if config.consensus_threshold is None
            else config.consensus_threshold
        )
        self.network = network = bootstrap_fsl_network(config.n_clients, self.store, consensus)
        self.partition = partition(
            self.train_set, config.n_clients, config.partition, config.alpha, config.seed
        )
        model, fc_params, fs_params = build_model(config.model, config.seed, **config.model_kwargs)
        if tuple(self.train_set.X.shape[1:]) != tuple(model.input_shape):
            raise ValueError(
                "dataset samples have shape {}, {} expects {}".format(
                    tuple(self.train_set.X.shape[1:]), model.name, model.input_shape
                )
            )
        limit = (
            settings.transient_limit
            if config.transient_limit is None
            else config.transient_limit
        )
        self.transport = BlobTransport(self.store, PeerMailbox(), limit, self.audit)

        fc_spec = self.store.put(model.spec_bytes("fc"))
        fs_spec = self.store.put(model.spec_bytes("fs"))
        genesis = self.transport.publish(serialize_params(fc_params))
        self._pinned = {fc_spec, fs_spec}
        admin = network.gateway(network.admin)
        admin.publish_model(
            model.name, fc_spec, fs_spec, model.split_label, genesis
        ).raise_for_status()

        self.server = ServerActor(
            network.gateway(network.server),
            model,
            fs_params,
            self.transport,
            config.train,
            self.clock,
        )
        self.server.register("f_s of {}".format(model.name))

        for index, client_id in enumerate(network.clients):
            gateway = network.gateway(client_id)
            meta = gateway.get_model(model.name)
            client_model = model_from_spec_bytes(
                self.store.get(meta.fc_spec_hash), self.store.get(meta.fs_spec_hash)
            )
            client = ClientActor(
                gateway,
                self.partition[client_id],
                client_model,
                self.transport,
                config.train,
                index,
                self.clock,
            )
            client.register()
            client.sync_global()
            self.clients.append(client)

        self.model = model
        self._refresh_global()
        self.initial_accuracy, self.initial_loss = self.evaluate()
        logger.info(
            "Set up '{}': {} clients, {} ({} f_c / {} f_s parameters), {} partition.".format(
                config.name,
                config.n_clients,
                model.name,
                len(fc_params),
                len(fs_params),
                config.partition,
            )
        )
        return self

    def _check_setup(self):
        if self.network is None:
            raise RuntimeError("network not set up, call setup() first")

    def _refresh_global(self):
        record = self.network.gateway(self.network.admin).get_current_global_model()
        blob = self.transport.fetch(record.global_hash)
        self.global_params = deserialize_params(blob)
        self.global_record = record

    @property
    def live_clients(self) -> List[ClientActor]:
        return [c for c in self.clients if not c.dropped]

    def client(self, client_id: str) -> ClientActor:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise ValueError("unknown target '{}'".format(client_id))

    # rounds

    def start_epoch(self) -> int:
        """Reshuffle every live client's batches; returns the number of rounds."""
        self._check_setup()
        self.epoch += 1
        for c in self.live_clients:
            c.start_epoch()
        return max((c.rounds_per_epoch for c in self.live_clients), default=0)

    def _account(self, trace: RoundTrace, before: LedgerMetrics):
        after = self.network.ledger.metrics()
        for name, count in after.events_by_name.items():
            delta = count - before.events_by_name.get(name, 0)
            if delta:
                trace.events[name] = trace.events.get(name, 0) + delta
        trace.transactions += after.committed_tx_count - before.committed_tx_count

    def _gc(self):
        if not self.collect_garbage:
            return
        live = set(self._pinned)
        if self.global_record is not None:
            live.add(self.global_record.global_hash)
        self.store.gc(live)

    def run_round(self, round_id: Optional[int] = None) -> RoundTrace:
        """
        One batch per active client through ``f_c``, the server and back.

        Clients without a remaining batch in the current epoch idle. A new epoch is
        started when no client has a batch left.
        """
        self._check_setup()
        if not any(c.has_batch for c in self.live_clients):
            self.start_epoch()
        round_id = self.round_id if round_id is None else round_id
        trace = RoundTrace(round_id, self.epoch)
        before = self.network.ledger.metrics()
        active = [c for c in self.live_clients if c.has_batch]
        try:
            self.scheduler.map(lambda c: c.forward(round_id, trace), active)
            self.server.process_round(round_id, trace)
            self.scheduler.map(lambda c: c.backward(trace), active)
        except LedgerError as error:
            logger.error("Round {} aborted: {}".format(round_id, error))
            raise RoundAbortedError(round_id, error) from error
        self._account(trace, before)
        self.round_id = round_id + 1
        self._gc()
        trace.check()
        self.traces.append(trace)
        logger.debug(
            "Round {}: {} clients, server loss {:.4f}.".format(
                round_id, len(active), trace.server_loss
            )
        )
        return trace

    def next_aggregation_id(self) -> str:
        return "agg-{:06d}".format(self._n_aggregations)

    def _sample(self, live: List[ClientActor]) -> List[ClientActor]:
        if self.config.client_fraction >= 1.0:
            return list(live)
        k = max(1, int(round(self.config.client_fraction * len(live))))
        random_state = np.random.RandomState([self.config.seed, self._n_aggregations])
        chosen = sorted(random_state.choice(len(live), size=k, replace=False))
        return [live[i] for i in chosen]

    def _attempt_reads(
        self, aggregation_id: str, participants: List[ClientActor], trace: RoundTrace
    ):
        for reader in sorted(self._readers):
            if reader == self.network.server.actor_id:
                identity = self.network.server
            else:
                identity = self.network.clients[reader]
            victims = [p.client_id for p in participants if p.client_id != reader]
            if not victims:
                continue
            key = "agg/{}/{}".format(aggregation_id, victims[0])
            try:
                self.network.ledger.read_private(
                    _CONSTANTS.CLIENT_MODEL_COLLECTION, key, identity
                )
            except AccessDeniedError as error:
                trace.denied_reads.append(str(error))

    def run_aggregation(
        self, aggregation_id: str, round_id: int, trace: Optional[RoundTrace] = None
    ) -> Optional[GlobalModelRecord]:
        """
        One client-led aggregation cycle.

        Participants publish their ``f_c`` parameters and submit the hashes, the admin
        opens the task, every participant averages the members' parameters and commits
        the resulting hash, and the last one to commit asks the contract to close the
        task. On commit every live client adopts the new global model; otherwise each
        falls back to the previous one.

        Returns
        -------
        The committed record, or ``None`` when consensus was not reached.
        """
        self._check_setup()
        trace = trace if trace is not None else RoundTrace(round_id, self.epoch)
        live = self.live_clients
        participants = self._sample(live)
        self._n_aggregations += 1
        if not participants:
            logger.warning("No live clients for aggregation '{}'.".format(aggregation_id))
            return None
        before = self.network.ledger.metrics()
        admin = self.network.gateway(self.network.admin)
        try:
            self.scheduler.map(
                lambda c: c.submit_model_hash(round_id, aggregation_id, trace), participants
            )
            self._attempt_reads(aggregation_id, participants, trace)
            with self.clock.measure() as span:
                admin.trigger_client_aggregation(aggregation_id).raise_for_status()
            trace.add_latency("triggerClientAggregation", span.seconds)
            contributions = [
                c for c in self.scheduler.map(lambda c: c.aggregate(trace), participants) if c
            ]
            trace.agg_compute_s += sum(c.seconds for c in contributions)
            closer_id = max(contributions, key=lambda c: c.height).client_id
            endorsers = [c.gateway.identity.msp for c in live]
            closing = self.client(closer_id).close_aggregation(
                aggregation_id, round_id, endorsers, trace
            )
            self.scheduler.map(lambda c: c.on_outcome(), live)
        except LedgerError as error:
            logger.error("Aggregation '{}' aborted: {}".format(aggregation_id, error))
            raise RoundAbortedError(round_id, error) from error

        self._account(trace, before)
        trace.aggregation_id = aggregation_id
        record = GlobalModelRecord.from_bytes(closing.result) if closing.result else None
        trace.aggregation_status = "Committed" if record is not None else "Failed"
        self.aggregations.append((aggregation_id, trace.aggregation_status))
        if record is not None:
            self._refresh_global()
        self._gc()
        return record

    def _aggregation_due(self, round_id: int, last_in_epoch: bool) -> bool:
        every = self.config.aggregation_every
        return last_in_epoch or (every is not None and (round_id + 1) % every == 0)

    def evaluate(self) -> Tuple[float, float]:
        """Test accuracy and loss of the global ``f_c`` with the server's ``f_s``."""
        self._check_setup()
        return evaluate(
            self.model,
            self.global_params,
            self.server.params,
            self.test_set.X,
            self.test_set.y,
        )

    def run_training(
        self, on_round_end: Optional[Callable[["FSLDriver", RoundTrace], None]] = None
    ) -> TrainingResult:
        """
        Run every epoch of the scenario, aggregating and evaluating as configured.

        ``on_round_end`` is called with the driver and the trace after every round, before
        the aggregation check. An epoch ends early once no live client has a batch left.
        """
        if self.network is None:
            self.setup()
        ledger = self.network.ledger
        for _ in track(
            range(self.config.train.epochs), description="Training...", disable=self.silent
        ):
            n_rounds = self.start_epoch()
            epoch_traces = []
            for r in range(n_rounds):
                trace = self.run_round()
                epoch_traces.append(trace)
                if on_round_end is not None:
                    on_round_end(self, trace)
                exhausted = not any(c.has_batch for c in self.live_clients)
                if self._aggregation_due(trace.round_id, exhausted or r == n_rounds - 1):
                    self.run_aggregation(self.next_aggregation_id(), trace.round_id, trace)
                if exhausted:
                    break
            accuracy, loss = self.evaluate()
            metrics = ledger.metrics()
            self.metric_rows.append(
                epoch_row(
                    self.epoch,
                    epoch_traces,
                    accuracy,
                    loss,
                    metrics.ledger_bytes,
                    metrics.reference_bytes,
                    last_round=self.round_id - 1,
                )
            )
            logger.info(
                "Epoch {}/{}: accuracy {:.4f}, loss {:.4f}, ledger height {}.".format(
                    self.epoch, self.config.train.epochs, accuracy, loss, metrics.height
                )
            )
        return self.result()

    def result(self) -> TrainingResult:
        self._check_setup()
        return TrainingResult(
            config=self.config,
            metrics=pd.DataFrame(self.metric_rows, columns=METRICS_CSV_COLUMNS),
            rounds=pd.DataFrame([t.to_row() for t in self.traces], columns=ROUNDS_CSV_COLUMNS),
            final_record=self.global_record,
            global_params=self.global_params,
            server_params=self.server.params,
            ledger_metrics=self.network.ledger.metrics(),
            records=self.network.ledger.records,
            initial_accuracy=self.initial_accuracy,
            initial_loss=self.initial_loss,
            traces=list(self.traces),
            aggregations=list(self.aggregations),
        )

    # faults

    def inject_fault(self, kind: str, target: Union[str, Iterable[str]]):
        """
        Make actors misbehave from the next round on.

        Parameters
        ----------
        kind
            ``"corrupt_aggregation"``: the targeted clients commit a perturbed global hash.
            ``"drop_client"``: the targeted clients stop taking part.
            ``"unauthorized_read"``: the targeted actors (server or clients) try to read
            another client's entry in the client model collection at each aggregation.
        target
            Actor id or ids.
        """
        self._check_setup()
        if kind not in FAULT_KINDS:
            raise ValueError("unknown fault '{}', expected one of {}".format(kind, FAULT_KINDS))
        targets = [target] if isinstance(target, str) else list(target)
        if not targets:
            raise ValueError("unknown target: none given")
        if kind == "unauthorized_read":
            known = set(self.network.clients) | {self.network.server.actor_id}
            for t in targets:
                if t not in known:
                    raise ValueError("unknown target '{}'".format(t))
            self._readers.update(targets)
        else:
            clients = [self.client(t) for t in targets]
            for c in clients:
                if kind == "corrupt_aggregation":
                    c.corrupt = True
                else:
                    c.dropped = True
                    c.close()
            if kind == "drop_client":
                self._reissue_policies()
        logger.info("Injected {} on {}.".format(kind, ", ".join(targets)))

    def _reissue_policies(self):
        # quorums follow the remaining client organizations
        remaining = [c.gateway.identity.msp for c in self.live_clients]
        if not remaining:
            return
        for function, policy in fsl_policies(remaining).items():
            self.network.ledger.set_policy(function, policy)
        logger.info(
            "endGlobalModel now needs {} of {} client endorsements.".format(
                self.network.ledger.policy_for("endGlobalModel").threshold, len(remaining)
            )
        )

    def close(self):
        self.scheduler.close()
        for c in self.clients:
            if not c.dropped:
                c.close()
        if self.server is not None:
            self.server.close()
        if self.network is not None:
            self.network.ledger.close()


def run_training(
    config: ScenarioConfig,
    train_set: Optional[Dataset] = None,
    test_set: Optional[Dataset] = None,
    store: Optional[OffchainStore] = None,
    audit: Optional[OffchainStore] = None,
    silent: bool = True,
) -> TrainingResult:
    """
    Set up and run a scenario end to end.

    Parameters
    ----------
    config
        Scenario to run.
    train_set, test_set
        Data; loaded from ``config.dataset`` when omitted.
    store
        Off-chain store for the run.
    audit
        Store receiving every private blob, for leak scans.
    silent
        If True, disables progress bar.

    Returns
    -------
    Per-epoch metrics, round traces, the final global model record and a ledger
    metrics snapshot.
    """
    if train_set is None or test_set is None:
        train_set, test_set = load_scenario_data(config)
    driver = FSLDriver(config, train_set, test_set, store=store, audit=audit, silent=silent)
    try:
        return driver.setup().run_training()
    finally:
        driver.close()
