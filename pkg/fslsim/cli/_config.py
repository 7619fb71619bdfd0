import json
import logging
import os
import uuid
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Any, Dict, Mapping, Optional, Union

import toml

from fslsim.actors import ScenarioConfig
from fslsim.core import TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = ("scenario", "train", "data", "output")

#: keys of ``[scenario]`` and the ``ScenarioConfig`` field each one sets
SCENARIO_KEYS = {
    "name": "name",
    "clients": "n_clients",
    "n_clients": "n_clients",
    "model": "model",
    "model_kwargs": "model_kwargs",
    "scheduler": "scheduler",
    "consensus_threshold": "consensus_threshold",
    "client_fraction": "client_fraction",
    "transient_limit": "transient_limit",
}
DATA_KEYS = ("dataset", "partition", "alpha")
OUTPUT_KEYS = ("dir", "audit_blobs")

ARTIFACTS = {
    "manifest": "manifest.json",
    "metrics": "metrics.csv",
    "rounds": "rounds.csv",
    "ledger": "ledger.b64",
    "ledger_metrics": "ledger_metrics.csv",
    "blobs": "blobs",
}


class ConfigError(ValueError):
    """A scenario file or command-line value that cannot be used."""


@dataclass(frozen=True)
class RunConfig:
    """A validated scenario plus where its artifacts go."""

    scenario: ScenarioConfig
    out_dir: str
    audit_blobs: bool = False

    def path(self, artifact: str) -> str:
        return os.path.join(self.out_dir, ARTIFACTS[artifact])


def _threshold(value) -> Optional[Fraction]:
    if value is None:
        return None
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ConfigError("consensus_threshold must be a number or 'a/b'") from None


def _table(document: Mapping[str, Any], name: str) -> Dict[str, Any]:
    table = document.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError("[{}] must be a table".format(name))
    return dict(table)


def _unknown(keys, allowed, section: str):
    extra = sorted(set(keys) - set(allowed))
    if extra:
        raise ConfigError("unknown key(s) in [{}]: {}".format(section, ", ".join(extra)))


def parse_scenario(
    document: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Build a :class:`RunConfig` from a parsed scenario document.

    Parameters
    ----------
    document
        Mapping with the ``[scenario]``, ``[train]``, ``[data]`` and ``[output]`` tables.
        Keys of ``[data]`` other than ``dataset``, ``partition`` and ``alpha`` are passed
        to the dataset loader.
    overrides
        Command-line values: ``epochs``, ``clients``, ``seed``, ``alpha``, ``out`` and
        ``scheduler``. ``None`` entries are ignored; an ``alpha`` switches the partition
        to ``"dirichlet"``.
    """
    _unknown(document, SECTIONS, "top level")
    scenario = _table(document, "scenario")
    train = _table(document, "train")
    data = _table(document, "data")
    output = _table(document, "output")
    _unknown(scenario, SCENARIO_KEYS, "scenario")
    _unknown(train, [f.name for f in fields(TrainConfig)], "train")
    _unknown(output, OUTPUT_KEYS, "output")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "epochs" in overrides:
        train["epochs"] = overrides["epochs"]
    if "seed" in overrides:
        train["seed"] = overrides["seed"]
    if "clients" in overrides:
        scenario["clients"] = overrides["clients"]
    if "scheduler" in overrides:
        scenario["scheduler"] = overrides["scheduler"]
    if "alpha" in overrides:
        data["alpha"] = overrides["alpha"]
        data["partition"] = "dirichlet"

    values = {SCENARIO_KEYS[k]: v for k, v in scenario.items()}
    values["consensus_threshold"] = _threshold(values.get("consensus_threshold"))
    for key in DATA_KEYS:
        if key in data:
            values[key] = data.pop(key)
    values["dataset_kwargs"] = data
    try:
        config = ScenarioConfig(train=TrainConfig(**train), **values)
    except (TypeError, ValueError) as error:
        raise ConfigError(str(error)) from error

    out_dir = overrides.get("out", output.get("dir", os.path.join("runs", config.name)))
    return RunConfig(config, str(out_dir), bool(output.get("audit_blobs", False)))


def load_scenario(
    path: Union[str, os.PathLike], overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """Read a TOML scenario file and apply command-line overrides."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = toml.load(f)
    except FileNotFoundError:
        raise ConfigError("scenario file not found: {}".format(path)) from None
    except toml.TomlDecodeError as error:
        raise ConfigError("{}: {}".format(path, error)) from error
    logger.debug("Loaded scenario file {}".format(path))
    return parse_scenario(document, overrides)


def _jsonable(value):
    if isinstance(value, Fraction):
        return "{}/{}".format(value.numerator, value.denominator)
    raise TypeError("{!r} is not JSON serializable".format(value))


@dataclass(frozen=True)
class RunManifest:
    """
    What a run was asked to do, written before training starts.

    ``run_id`` is derived from the scenario; ``start_height`` and ``planned_epochs``
    mark where the run begins and ends. A manifest file is never rewritten.
    """

    config: Dict[str, Any]
    seed: int
    run_id: str
    start_height: int
    planned_epochs: int
    outputs: Dict[str, str]
    version: str
    source: Optional[str] = None

    @classmethod
    def for_run(
        cls, run: RunConfig, version: str, source: Optional[str] = None, start_height: int = 0
    ) -> "RunManifest":
        config = run.scenario.to_dict()
        run_id = uuid.uuid5(
            uuid.NAMESPACE_URL,
            json.dumps(config, sort_keys=True, default=_jsonable),
        ).hex
        outputs = {k: os.path.basename(run.path(k)) for k in ARTIFACTS if k != "manifest"}
        if not run.audit_blobs:
            outputs.pop("blobs")
        return cls(
            config=config,
            seed=run.scenario.seed,
            run_id=run_id,
            start_height=start_height,
            planned_epochs=run.scenario.train.epochs,
            outputs=outputs,
            version=version,
            source=None if source is None else os.fspath(source),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, default=_jsonable) + "\n"

    def write(self, path: Union[str, os.PathLike]):
        if os.path.exists(path):
            raise ConfigError("run directory already holds a manifest: {}".format(path))
        with open(path, "x", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())

    @classmethod
    def read(cls, path: Union[str, os.PathLike]) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))

    def scenario(self) -> ScenarioConfig:
        config = dict(self.config)
        config["consensus_threshold"] = _threshold(config.get("consensus_threshold"))
        return ScenarioConfig.from_dict(config)
