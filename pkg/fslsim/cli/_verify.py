"""Invariant suites run by ``fslsim verify``."""
import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fslsim import _CONSTANTS
from fslsim._utils import track
from fslsim.actors import FSLDriver, ScenarioConfig, load_scenario_data
from fslsim.contract import DEFAULT_CONSENSUS, bootstrap_fsl_network, consensus_reached
from fslsim.core import (
    TrainConfig,
    backward_client,
    build_model,
    forward_client,
    forward_server,
    monolithic_loss_and_grad,
    private_payload,
    server_step,
)
from fslsim.ledger import (
    TransactionRecord,
    export_ledger,
    find_fragment_leaks,
    ledger_file_bytes,
    read_ledger,
)
from fslsim.store import Cid, OffchainStore

from ._config import ARTIFACTS, ConfigError

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    """Outcome of one verification suite."""

    suite: str
    passed: bool
    checked: int
    summary: str
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)

    def counterexample_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.counterexamples)


# privacy


def privacy_scenario() -> ScenarioConfig:
    """One epoch of ten clients on the synthetic task."""
    return ScenarioConfig(n_clients=10, train=TrainConfig(epochs=1), name="privacy-check")


def _public_cid_digests(records: Sequence[TransactionRecord]) -> set:
    digests = set()
    for record in records:
        values = list(record.public_args)
        for event in record.events:
            values.extend(c.encode("ascii") for c in event.cids)
        for value in values:
            if Cid.is_valid(value):
                digests.add(hashlib.sha256(bytes(value)).digest())
    return digests


def verify_privacy(
    run_dir: Optional[Union[str, os.PathLike]] = None,
    config: Optional[ScenarioConfig] = None,
    window: int = 9,
    silent: bool = True,
) -> SuiteResult:
    """
    Scan an exported ledger for fragments of any activation, gradient or parameter blob.

    Also checks that every private write hashes a cid that is public on the ledger and,
    when the suite runs its own scenario, that every collection value is a cid.

    Parameters
    ----------
    run_dir
        Directory of a finished ``fslsim run`` with ``audit_blobs`` enabled. When
        omitted, ``config`` (default :func:`privacy_scenario`) is run in memory.
    config
        Scenario for the in-memory run.
    window
        Shortest shared run of bytes that counts as a leak.
    silent
        If True, disables progress bar.
    """
    pdc_values: Dict[str, Dict[str, bytes]] = {}
    if run_dir is not None:
        ledger_path = os.path.join(run_dir, ARTIFACTS["ledger"])
        blob_dir = os.path.join(run_dir, ARTIFACTS["blobs"])
        if not os.path.exists(ledger_path):
            raise ConfigError("missing artifact: {}".format(ledger_path))
        if not os.path.isdir(blob_dir):
            raise ConfigError(
                "no audit blobs in {}: set audit_blobs = true in [output]".format(run_dir)
            )
        records = read_ledger(ledger_path)
        haystack = ledger_file_bytes(ledger_path)
        audit = OffchainStore(blob_dir)
    else:
        config = config if config is not None else privacy_scenario()
        train_set, test_set = load_scenario_data(config)
        audit = OffchainStore("")
        driver = FSLDriver(
            config, train_set, test_set, store=OffchainStore(""), audit=audit, silent=silent
        )
        try:
            driver.setup().run_training()
            ledger = driver.network.ledger
            records = ledger.records
            for pdc in ledger.collections:
                pdc_values[pdc.name] = ledger.private_values(pdc.name)
        finally:
            driver.close()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, ARTIFACTS["ledger"])
            export_ledger(records, path)
            haystack = ledger_file_bytes(path)

    cids = list(audit.cids())
    payloads = [private_payload(audit.get(c)) for c in cids]
    counterexamples = []
    for leak in find_fragment_leaks(haystack, payloads, window=window):
        counterexamples.append(
            {
                "check": "fragment",
                "blob": cids[leak.source],
                "offset": leak.offset,
                "fragment": leak.fragment.hex(),
            }
        )

    public = _public_cid_digests(records)
    n_private = 0
    for record in records:
        for write in record.private_writes:
            n_private += 1
            if write.digest not in public:
                counterexamples.append(
                    {
                        "check": "private digest",
                        "collection": write.collection,
                        "key": write.key,
                    }
                )
    for collection, values in pdc_values.items():
        for key, value in values.items():
            if len(value) != _CONSTANTS.CID_LENGTH or not Cid.is_valid(value):
                counterexamples.append(
                    {"check": "collection value", "collection": collection, "key": key}
                )

    n_leaks = sum(1 for c in counterexamples if c["check"] == "fragment")
    return SuiteResult(
        "privacy",
        not counterexamples,
        len(payloads) + n_private,
        "{} blobs ({} bytes) scanned against {} ledger bytes: {} leaked fragments".format(
            len(payloads), sum(len(p) for p in payloads), len(haystack), n_leaks
        ),
        counterexamples,
        {"blobs": len(payloads), "ledger_bytes": len(haystack), "leaks": n_leaks},
    )


# consensus


def contract_cycle(participants: int, agreeing: int, fraction=DEFAULT_CONSENSUS):
    """
    Run one aggregation cycle through the contract.

    ``agreeing`` members commit the same global hash; the others commit distinct
    hashes, or nothing when nobody agrees.

    Returns
    -------
    Whether the cycle committed, the agreed hash, the genesis hash and the hash
    ``getCurrentGlobalModel`` reports afterwards.
    """
    store = OffchainStore("")
    network = bootstrap_fsl_network(participants, store, fraction)
    try:
        admin = network.gateway(network.admin)
        genesis = store.put(b"genesis")
        admin.publish_model(
            "cycle", store.put(b"fc"), store.put(b"fs"), "cut", genesis
        ).raise_for_status()
        ids = list(network.clients)
        for client_id in ids:
            gateway = network.gateway(client_id)
            gateway.register_client(client_id, 1).raise_for_status()
            param_hash = store.put("params of {}".format(client_id).encode())
            gateway.submit_client_model_hash(0, "cycle", param_hash).raise_for_status()
        admin.trigger_client_aggregation("cycle").raise_for_status()

        agreed = Cid.of(b"agreed")
        for i, client_id in enumerate(ids):
            if i < agreeing:
                global_hash = agreed
            elif agreeing == 0:
                continue
            else:
                global_hash = Cid.of("dissent of {}".format(client_id).encode())
            network.gateway(client_id).commit_global_model_hash(
                "cycle", 0, global_hash
            ).raise_for_status()
        record = network.gateway(ids[0]).end_global_model(
            "cycle", 0, endorsers=network.client_msps
        )
        record.raise_for_status()
        current = admin.get_current_global_model().global_hash
        return bool(record.result), agreed, genesis, current
    finally:
        network.ledger.close()


def verify_consensus(
    max_participants: int = 15,
    fraction: Union[Fraction, float] = DEFAULT_CONSENSUS,
    through_contract: bool = True,
    silent: bool = True,
) -> SuiteResult:
    """
    Compare the commit rule with a brute-force ``count / P > fraction`` for every
    ``P`` in ``[1, max_participants]`` and every agreeing count in ``[0, P]``.

    With ``through_contract`` each case is also run as a full aggregation cycle, and
    ``getCurrentGlobalModel`` must report the agreed hash on commit and the previous
    one otherwise.
    """
    fraction = Fraction(fraction).limit_denominator(10 ** 6)
    counterexamples = []
    checked = 0
    for p in track(
        range(1, max_participants + 1), description="Consensus sweep...", disable=silent
    ):
        for c in range(p + 1):
            checked += 1
            expected = Fraction(c, p) > fraction
            predicate = consensus_reached(c, p, fraction)
            if predicate != expected:
                counterexamples.append(
                    {"participants": p, "agreeing": c, "expected": expected, "got": predicate}
                )
                continue
            if not through_contract:
                continue
            committed, agreed, genesis, current = contract_cycle(p, c, fraction)
            wanted = agreed if expected else genesis
            if committed != expected or current != wanted:
                counterexamples.append(
                    {
                        "participants": p,
                        "agreeing": c,
                        "expected": expected,
                        "got": committed,
                        "current": current,
                    }
                )
    return SuiteResult(
        "consensus",
        not counterexamples,
        checked,
        "{} (participants, agreeing) cases with threshold {}{}".format(
            checked, fraction, " through the contract" if through_contract else ""
        ),
        counterexamples,
    )


# numerics


def _relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def verify_gradients(
    dims: Sequence[int] = (2, 4, 3),
    h: float = 1e-5,
    tolerance: float = 1e-4,
    batch_size: int = 8,
    seed: int = 0,
    silent: bool = True,
) -> SuiteResult:
    """
    Central finite differences against the split backward pass, every coordinate.
    """
    model, fc, fs = build_model("tiny-mlp", seed, dims=tuple(dims))
    random_state = np.random.RandomState(seed)
    x = random_state.normal(size=(batch_size, dims[0]))
    y = random_state.randint(dims[-1], size=batch_size)

    activations = forward_client(model, fc, x)
    step = server_step(model, fs, activations.tensor, y)
    grad_fc = backward_client(model, fc, x, step.grad_activations)

    def loss(fc_params, fs_params) -> float:
        z = forward_client(model, fc_params, x)
        return forward_server(model, fs_params, z, y)[0]

    counterexamples = []
    errors = []
    for part, params, grad in (("fc", fc, grad_fc), ("fs", fs, step.grad_fs)):
        description = "Checking {}...".format(part)
        for i in track(range(len(params)), description=description, disable=silent):
            e = np.zeros(len(params))
            e[i] = h
            plus = params.with_values(params.values + e)
            minus = params.with_values(params.values - e)
            if part == "fc":
                fd = (loss(plus, fs) - loss(minus, fs)) / (2 * h)
            else:
                fd = (loss(fc, plus) - loss(fc, minus)) / (2 * h)
            err = float(_relative_error(np.array(fd), np.array(grad.values[i])))
            errors.append(err)
            if err >= tolerance:
                counterexamples.append(
                    {
                        "part": part,
                        "index": i,
                        "finite_difference": fd,
                        "backprop": float(grad.values[i]),
                        "relative_error": err,
                    }
                )
    max_err = max(errors) if errors else 0.0
    return SuiteResult(
        "gradients",
        not counterexamples,
        len(errors),
        "{} coordinates on {}, max relative error {:.3e} (tolerance {:g})".format(
            len(errors), "->".join(str(d) for d in dims), max_err, tolerance
        ),
        counterexamples,
        {"max_relative_error": max_err},
    )


def verify_equivalence(
    draws: int = 100,
    tolerance: float = 1e-9,
    model_spec: str = "tiny-mlp",
    seed: int = 0,
    silent: bool = True,
) -> SuiteResult:
    """
    Split loss and gradients against the unsplit network on random parameters and
    batches.
    """
    model, fc0, fs0 = build_model(model_spec, seed)
    counterexamples = []
    worst = 0.0
    for k in track(range(draws), description="Split vs monolithic...", disable=silent):
        random_state = np.random.RandomState([seed, k])
        fc = fc0.with_values(random_state.normal(scale=0.5, size=len(fc0)))
        fs = fs0.with_values(random_state.normal(scale=0.5, size=len(fs0)))
        n = random_state.randint(1, 33)
        x = random_state.normal(size=(n,) + tuple(model.input_shape))
        y = random_state.randint(model.n_classes, size=n)

        activations = forward_client(model, fc, x)
        step = server_step(model, fs, activations.tensor, y)
        grad_fc = backward_client(model, fc, x, step.grad_activations)
        loss, mono_fc, mono_fs = monolithic_loss_and_grad(model, fc, fs, x, y)

        error = max(
            abs(step.loss - loss),
            float(np.max(np.abs(grad_fc.values - mono_fc.values), initial=0.0)),
            float(np.max(np.abs(step.grad_fs.values - mono_fs.values), initial=0.0)),
        )
        worst = max(worst, error)
        if error > tolerance:
            counterexamples.append({"draw": k, "batch_size": n, "abs_error": error})
    return SuiteResult(
        "equivalence",
        not counterexamples,
        draws,
        "{} draws on {}, max absolute difference {:.3e} (tolerance {:g})".format(
            draws, model_spec, worst, tolerance
        ),
        counterexamples,
        {"max_abs_error": worst},
    )


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "privacy": verify_privacy,
    "consensus": verify_consensus,
    "gradients": verify_gradients,
    "equivalence": verify_equivalence,
}
