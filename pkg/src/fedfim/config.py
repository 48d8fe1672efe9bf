"""Experiment configuration: a flat, typed key=value text format.

Files hold one `key = value` per line; `#` starts a comment.  Every key has
a documented default, unknown keys are rejected with a suggestion, and the
fully-defaulted map can be dumped back out as the "effective config" so any
run can be reproduced from its dump alone.  CLI overrides are plain
`key=value` pairs applied on top of the file.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .federation import OPTIMIZERS, RoundConfig
from .fedova import COMPONENT_OPTIMIZERS

_MISSING = object()


@dataclass(frozen=True)
class FieldSpec:
    kind: str  # "int" | "float" | "bool" | "str" | "int-list"
    default: Any
    choices: tuple = ()
    help: str = ""


SCHEMA: dict[str, FieldSpec] = {
    "run_id": FieldSpec("str", "", help="output directory name; derived when empty"),
    "seed": FieldSpec("int", 1, help="seed for single runs"),
    "seeds": FieldSpec("int-list", (), help="seed sweep used by `compare`; empty = [seed]"),
    "scheme": FieldSpec("str", "fedavg", ("fedavg", "fedova"), "training scheme"),
    "output_dir": FieldSpec("str", "runs", help="metrics root (env FEDFIM_OUTPUT_DIR overrides)"),
    # dataset source
    "dataset.kind": FieldSpec("str", "synth", ("synth", "idx", "csv")),
    "dataset.train_samples": FieldSpec("int", 2000, help="synth: training rows"),
    "dataset.eval_samples": FieldSpec("int", 500, help="synth: held-out rows"),
    "dataset.input_dim": FieldSpec("int", 20, help="synth: feature count"),
    "dataset.num_classes": FieldSpec("int", 10, help="synth: class count"),
    "dataset.margin": FieldSpec("float", 5.0, help="synth: label softmax sharpening"),
    "dataset.images": FieldSpec("str", "", help="idx: training image file"),
    "dataset.labels": FieldSpec("str", "", help="idx: training label file"),
    "dataset.eval_images": FieldSpec("str", "", help="idx: eval image file"),
    "dataset.eval_labels": FieldSpec("str", "", help="idx: eval label file"),
    "dataset.csv_path": FieldSpec("str", "", help="csv: data file"),
    "dataset.label_column": FieldSpec("str", "label", help="csv: label column name"),
    "dataset.eval_fraction": FieldSpec("float", 0.2, help="csv: held-out fraction"),
    "dataset.add_intercept": FieldSpec("bool", False, help="append a constant 1.0 feature"),
    # model
    "model.kind": FieldSpec(
        "str", "softmax-regression", ("binary-logistic", "softmax-regression", "mlp1")
    ),
    "model.hidden_dim": FieldSpec("int", 32, help="mlp1 only"),
    # partition
    "partition.scheme": FieldSpec("str", "iid", ("iid", "noniid-l")),
    "partition.clients": FieldSpec("int", 100, help="client count K"),
    "partition.l": FieldSpec("int", 2, help="distinct labels per client (noniid-l)"),
    # data-sharing baseline
    "share.beta": FieldSpec("float", 0.0, help="shared-subset rate; 0 disables"),
    # round engine
    "round.optimizer": FieldSpec("str", "fedavg-sgd", OPTIMIZERS),
    "round.total_rounds": FieldSpec("int", 100),
    "round.participation": FieldSpec("float", 0.2),
    "round.local_epochs": FieldSpec("int", 5),
    "round.batch_size": FieldSpec("int", 15),
    "round.learning_rate": FieldSpec("float", 0.1),
    "round.memory_size": FieldSpec("int", 10),
    "round.tau": FieldSpec("int", 0, help="cost-model block count; 0 = participants"),
    "round.cautious_eps": FieldSpec("float", 1e-8),
    "round.fim_damping": FieldSpec("float", 1e-6),
    "round.h0_mode": FieldSpec("str", "gamma-scaled", ("gamma-scaled", "identity")),
    "round.gradient_weighting": FieldSpec("str", "size", ("size", "uniform")),
    "round.fim_weighting": FieldSpec("str", "uniform", ("uniform", "size")),
    "round.fedavg_weighting": FieldSpec("str", "size", ("size", "uniform")),
    # fedova extras
    "fedova.component_optimizer": FieldSpec("str", "averaging", COMPONENT_OPTIMIZERS),
    "fedova.balanced_sampling": FieldSpec("bool", False),
    "fedova.component_metrics": FieldSpec("bool", False, help="write components.csv"),
    # evaluation / stopping
    "eval.every": FieldSpec("int", 1),
    "stop.target_accuracy": FieldSpec("float", 0.0, help="0 disables early stop"),
    "stop.tolerance": FieldSpec("float", 0.0),
    "stop.patience": FieldSpec("int", 3),
}


def _convert(key: str, raw: str) -> Any:
    spec = SCHEMA[key]
    raw = raw.strip()
    try:
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "float":
            return float(raw)
        if spec.kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if spec.kind == "int-list":
            if not raw:
                return ()
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {spec.kind}") from None


def _check_choices(key: str, value: Any):
    spec = SCHEMA[key]
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{key}: {value!r} is not one of {list(spec.choices)}")


def _reject_unknown(key: str):
    if key in SCHEMA:
        return
    hint = difflib.get_close_matches(key, SCHEMA.keys(), n=1)
    suffix = f"; did you mean {hint[0]!r}?" if hint else ""
    raise ConfigError(f"unknown config key {key!r}{suffix}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated, fully defaulted experiment description."""

    flat: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.flat[key]

    # typed accessors for the busiest keys ---------------------------------

    @property
    def scheme(self) -> str:
        return self.flat["scheme"]

    @property
    def seed(self) -> int:
        return self.flat["seed"]

    @property
    def seeds(self) -> tuple:
        return self.flat["seeds"] or (self.flat["seed"],)

    @property
    def run_id(self) -> str:
        return self.flat["run_id"]

    @property
    def output_dir(self) -> str:
        return self.flat["output_dir"]

    def round_config(self) -> RoundConfig:
        f = self.flat
        return RoundConfig(
            optimizer=f["round.optimizer"],
            total_rounds=f["round.total_rounds"],
            participation=f["round.participation"],
            local_epochs=f["round.local_epochs"],
            batch_size=f["round.batch_size"],
            learning_rate=f["round.learning_rate"],
            memory_size=f["round.memory_size"],
            tau=f["round.tau"],
            cautious_eps=f["round.cautious_eps"],
            fim_damping=f["round.fim_damping"],
            h0_mode=f["round.h0_mode"],
            gradient_weighting=f["round.gradient_weighting"],
            fim_weighting=f["round.fim_weighting"],
            fedavg_weighting=f["round.fedavg_weighting"],
        )

    def derived_run_id(self, seed: int | None = None) -> str:
        seed = self.seed if seed is None else seed
        base = self.run_id or (
            f"{self.scheme}-{self.flat['round.optimizer']}-{self.flat['dataset.kind']}"
        )
        return f"{base}-s{seed}"

    def dump(self) -> str:
        """Effective config: every key with its final value, one per line."""
        lines = ["# effective configuration (all defaults resolved)"]
        for key in SCHEMA:
            value = self.flat[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _validate(flat: dict) -> None:
    """Cross-field checks that do not need the data on disk."""
    f = flat
    if f["seed"] < 0:
        raise ConfigError("seed must be nonnegative")
    if f["round.total_rounds"] < 0:
        raise ConfigError("round.total_rounds must be >= 0")
    if not (0.0 < f["round.participation"] <= 1.0):
        raise ConfigError("round.participation must lie in (0, 1]")
    if f["partition.clients"] < 1:
        raise ConfigError("partition.clients must be >= 1")
    if f["round.participation"] * f["partition.clients"] < 1.0:
        raise ConfigError("round.participation * partition.clients must be >= 1")
    if f["eval.every"] < 1:
        raise ConfigError("eval.every must be >= 1")
    if f["stop.patience"] < 1:
        raise ConfigError("stop.patience must be >= 1")
    if not (0.0 <= f["share.beta"] <= 1.0):
        raise ConfigError("share.beta must lie in [0, 1]")
    if f["dataset.kind"] == "synth":
        if f["dataset.train_samples"] < 1 or f["dataset.eval_samples"] < 1:
            raise ConfigError("synth datasets need train_samples and eval_samples >= 1")
        if f["partition.scheme"] == "noniid-l":
            l, K, n = f["partition.l"], f["partition.clients"], f["dataset.num_classes"]
            if (l * K) % n != 0:
                raise ConfigError(
                    "noniid-l partition requires (partition.l * partition.clients) "
                    f"divisible by dataset.num_classes: l={l}, K={K}, n={n}"
                )
    if f["dataset.kind"] == "idx":
        for key in ("dataset.images", "dataset.labels", "dataset.eval_images", "dataset.eval_labels"):
            if not f[key]:
                raise ConfigError(f"dataset.kind=idx requires {key}")
    if f["dataset.kind"] == "csv":
        if not f["dataset.csv_path"]:
            raise ConfigError("dataset.kind=csv requires dataset.csv_path")
        if not (0.0 < f["dataset.eval_fraction"] < 1.0):
            raise ConfigError("dataset.eval_fraction must lie in (0, 1)")


def parse_config_text(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse config text plus optional `key=value` override strings."""
    flat = {key: spec.default for key, spec in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        _reject_unknown(key)
        value = _convert(key, raw)
        _check_choices(key, value)
        flat[key] = value
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        _reject_unknown(key)
        value = _convert(key, raw)
        _check_choices(key, value)
        flat[key] = value
    _validate(flat)
    return ExperimentConfig(flat=flat)


def parse_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), overrides)
