"""Experiment configuration files (YAML) and validation."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import yaml

from ..engine.models import GBDTParams, ModelSpec, parse_model_name
from ..engine.sgd import TrainConfig
from ..errors import IncompatibleCombination, InvalidSpec, ParseError, UnknownEngine, UnknownScenario
from ..scenario.catalog import get_manifest

ALGORITHMS = ("fedavg", "histsecagg_gbdt", "vertical_regression", "vertical_gbdt")
MODES = ("in_process", "local_processes", "remote_shell")

# algorithm -> (settings, model kinds); mirrors the reference engine's model-support table
COMPATIBILITY = {
    "fedavg": ({"horizontal_cross_silo", "horizontal_cross_device"},
               {"logistic_regression", "linear_regression", "mlp"}),
    "histsecagg_gbdt": ({"horizontal_cross_silo", "horizontal_cross_device"}, {"gbdt"}),
    "vertical_regression": ({"vertical"}, {"logistic_regression", "linear_regression"}),
    "vertical_gbdt": ({"vertical"}, {"gbdt"}),
}

ENGINES: dict[str, object] = {"reference": None}


def register_engine(name: str, party_main) -> None:
    """Make an external engine selectable by name; ``party_main(role, ...)`` runs one party."""
    ENGINES[name] = party_main


@dataclass
class Deployment:
    mode: str = "local_processes"
    hosts: list[str] = field(default_factory=list)
    out_dir: str = "runs"
    port: int = 0
    bind_host: str = "127.0.0.1"
    work_dir: str | None = None
    remote_template: str = "ssh {host} {cmd}"
    probe_template: str = "ssh -o BatchMode=yes -o ConnectTimeout=5 {host} true"
    copy_template: str = "scp {host}:{src} {dst}"
    python: str = ""  # empty: the supervisor's interpreter locally, python3 remotely
    memory_interval_ms: int = 100
    timeout_s: float = 600.0


@dataclass
class ExperimentConfig:
    scenario: str
    algorithm: str
    model: ModelSpec
    training: TrainConfig = field(default_factory=TrainConfig)
    deployment: Deployment = field(default_factory=Deployment)
    engine: str = "reference"
    repeats: int = 5
    hist_masking: bool = False
    cache_dir: str | None = None

    def to_dict(self) -> dict:
        m = self.model
        model = {"kind": m.kind}
        if m.kind == "mlp":
            model["hidden_layers"] = list(m.hidden_layers)
        if m.kind == "gbdt":
            model["gbdt"] = asdict(m.gbdt_params)
        return {
            "scenario": self.scenario,
            "engine": self.engine,
            "algorithm": self.algorithm,
            "model": model,
            "training": asdict(self.training),
            "deployment": asdict(self.deployment),
            "repeats": self.repeats,
            "hist_masking": self.hist_masking,
            "cache_dir": self.cache_dir,
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        cfg.training.seed = self.training.seed + offset
        return cfg


def _model_from(raw) -> ModelSpec:
    if isinstance(raw, str):
        return parse_model_name(raw)
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ParseError("model must be a name such as mlp_128 or a mapping with 'kind'")
    if "name" in raw:
        spec = parse_model_name(raw["name"])
    else:
        spec = ModelSpec(raw["kind"], list(raw.get("hidden_layers", [])))
    if "gbdt" in raw:
        params = asdict(spec.gbdt_params)
        params.update(raw["gbdt"])
        spec.gbdt_params = GBDTParams(**params)
    return spec


def _scenario_facts(name: str) -> tuple[str, str, int]:
    m = get_manifest(name)
    if "synthetic" in m:
        clients = m["synthetic"].get("clients", 2)
    else:
        part = m.get("partition", {})
        clients = len(part["features_per_party"]) if m["setting"] == "vertical" else part.get("clients", 2)
    return m["setting"], m["task"], clients


def check_compatibility(algorithm: str, setting: str, task: str, kind: str) -> None:
    if algorithm not in COMPATIBILITY:
        raise ParseError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    settings, kinds = COMPATIBILITY[algorithm]
    if setting not in settings:
        raise IncompatibleCombination(
            f"{algorithm} does not support the {setting} setting (model support matrix: "
            f"{algorithm} runs on {sorted(settings)})")
    if kind not in kinds:
        raise IncompatibleCombination(
            f"{algorithm} cannot train a {kind} model (model support matrix: {sorted(kinds)})")
    if kind == "logistic_regression" and task == "regression":
        raise IncompatibleCombination("logistic_regression needs a classification task")
    if kind == "linear_regression" and task != "regression":
        raise IncompatibleCombination("linear_regression needs a regression task")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a mapping")
    for key in ("scenario", "algorithm", "model"):
        if key not in raw:
            raise ParseError(f"missing required key {key!r}")
    known = {"scenario", "engine", "algorithm", "model", "training", "deployment", "repeats",
             "hist_masking", "cache_dir"}
    extra = set(raw) - known
    if extra:
        raise ParseError(f"unknown keys: {sorted(extra)}")
    engine = raw.get("engine", "reference")
    if engine not in ENGINES:
        raise UnknownEngine(f"engine {engine!r} is not registered ({sorted(ENGINES)})")
    try:
        setting, task, clients = _scenario_facts(raw["scenario"])
    except UnknownScenario:
        raise
    try:
        model = _model_from(raw["model"])
        model.validate()
    except (InvalidSpec, TypeError) as exc:
        raise ParseError(f"bad model: {exc}") from exc
    check_compatibility(raw["algorithm"], setting, task, model.kind)

    tr = dict(raw.get("training") or {})
    tr.setdefault("clients_per_round", clients if setting != "vertical" else 1)
    try:
        training = TrainConfig(**tr)
        training.validate(total_clients=clients)
    except (TypeError, InvalidSpec) as exc:
        raise ParseError(f"bad training section: {exc}") from exc
    try:
        deployment = Deployment(**(raw.get("deployment") or {}))
    except TypeError as exc:
        raise ParseError(f"bad deployment section: {exc}") from exc
    if deployment.mode not in MODES:
        raise ParseError(f"deployment.mode must be one of {MODES}")
    if deployment.mode == "remote_shell" and not deployment.hosts:
        raise ParseError("remote_shell deployment needs at least one host")
    if deployment.memory_interval_ms < 10:
        raise ParseError("memory_interval_ms must be >= 10")
    repeats = raw.get("repeats", 5)
    if not isinstance(repeats, int) or repeats < 1:
        raise ParseError("repeats must be a positive integer")
    return ExperimentConfig(raw["scenario"], raw["algorithm"], model, training, deployment, engine,
                            repeats, bool(raw.get("hist_masking", False)), raw.get("cache_dir"))


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
