"""Experiment driver: dataset assembly, metrics persistence, comparisons.

Each run writes three files under <output_dir>/<run_id>/:

  metrics.csv           one row per evaluation point, streamed as produced
  effective-config.cfg  every config key with its resolved value
  summary.txt           final accuracy, convergence round, total scalars

The CSV schema is fixed (column order below); floats are written with
shortest round-trip repr so identical runs produce identical bytes, the
elapsed_ms column aside.  Raw per-round values are emitted; any curve
smoothing is left to post-processing.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .data import (
    Dataset,
    PartitionPlan,
    load_csv,
    load_idx,
    partition_iid,
    partition_noniid_l,
    share_subset,
    synth_logistic,
)
from .errors import ConfigError
from .federation import FederatedRun, RoundReport
from .fedova import FedOvaRun
from .models import ModelSpec
from .numerics import stream

CSV_COLUMNS = [
    "run_id",
    "seed",
    "scheme",
    "optimizer",
    "round",
    "train_loss",
    "eval_accuracy",
    "comm_scalars_cum",
    "curvature_min",
    "curvature_max",
    "skips",
    "elapsed_ms",
]

_STREAM_CSV_SPLIT = 15


def add_intercept(ds: Dataset) -> Dataset:
    """Append a constant 1.0 column; the bias-free models gain an intercept."""
    features = np.hstack([ds.features, np.ones((len(ds), 1))])
    return Dataset(features, ds.labels, ds.num_classes, name=ds.name, truth=ds.truth)


def load_datasets(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Materialize (train, eval) from the configured source."""
    f = cfg.flat
    kind = f["dataset.kind"]
    if kind not in ("synth", "idx", "csv"):
        raise ConfigError(f"unknown dataset.kind {kind!r}")
    train, eval_data = _load_raw(cfg, seed)
    if f["dataset.add_intercept"]:
        train, eval_data = add_intercept(train), add_intercept(eval_data)
    return train, eval_data


def _load_raw(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    f = cfg.flat
    kind = f["dataset.kind"]
    if kind == "synth":
        total = f["dataset.train_samples"] + f["dataset.eval_samples"]
        full = synth_logistic(
            total, f["dataset.input_dim"], f["dataset.num_classes"], f["dataset.margin"], seed
        )
        cut = f["dataset.train_samples"]
        train = Dataset(full.features[:cut], full.labels[:cut], full.num_classes,
                        name=full.name + "/train", truth=full.truth)
        eval_data = Dataset(full.features[cut:], full.labels[cut:], full.num_classes,
                            name=full.name + "/eval", truth=full.truth)
        return train, eval_data
    if kind == "idx":
        train = load_idx(f["dataset.images"], f["dataset.labels"], name="idx/train")
        eval_data = load_idx(f["dataset.eval_images"], f["dataset.eval_labels"], name="idx/eval")
        n = max(train.num_classes, eval_data.num_classes)
        train = Dataset(train.features, train.labels, n, name=train.name)
        eval_data = Dataset(eval_data.features, eval_data.labels, n, name=eval_data.name)
        return train, eval_data
    if kind == "csv":
        full = load_csv(f["dataset.csv_path"], f["dataset.label_column"])
        n_eval = max(1, int(round(f["dataset.eval_fraction"] * len(full))))
        if n_eval >= len(full):
            raise ConfigError("dataset.eval_fraction leaves no training rows")
        perm = stream(seed, _STREAM_CSV_SPLIT).permutation(len(full))
        eval_idx, train_idx = np.sort(perm[:n_eval]), np.sort(perm[n_eval:])
        train = Dataset(full.features[train_idx], full.labels[train_idx], full.num_classes,
                        name=full.name + "/train")
        eval_data = Dataset(full.features[eval_idx], full.labels[eval_idx], full.num_classes,
                            name=full.name + "/eval")
        return train, eval_data
    raise ConfigError(f"unknown dataset.kind {kind!r}")


def build_partition(cfg: ExperimentConfig, train: Dataset, seed: int) -> PartitionPlan:
    f = cfg.flat
    if f["partition.scheme"] == "iid":
        return partition_iid(train, f["partition.clients"], seed)
    return partition_noniid_l(train, f["partition.clients"], f["partition.l"], seed)


def build_model_spec(cfg: ExperimentConfig, train: Dataset) -> ModelSpec:
    f = cfg.flat
    return ModelSpec(
        kind=f["model.kind"],
        input_dim=train.input_dim,
        num_classes=train.num_classes,
        hidden_dim=f["model.hidden_dim"] if f["model.kind"] == "mlp1" else 0,
    )


def component_model_spec(cfg: ExperimentConfig, train: Dataset) -> ModelSpec:
    """Binary component model for the one-vs-all scheme."""
    f = cfg.flat
    if f["model.kind"] == "mlp1":
        return ModelSpec("mlp1", train.input_dim, 2, hidden_dim=f["model.hidden_dim"])
    return ModelSpec("binary-logistic", train.input_dim, 2)


def build_engine(cfg: ExperimentConfig, seed: int):
    """Assemble data, partition, and engine for one (config, seed) run."""
    train, eval_data = load_datasets(cfg, seed)
    plan = build_partition(cfg, train, seed)
    f = cfg.flat
    shared = None
    if f["share.beta"] > 0.0:
        shared = share_subset(train, f["share.beta"], f["partition.clients"], seed)
    common = dict(
        plan=plan,
        cfg=cfg.round_config(),
        seed=seed,
        shared_indices=shared,
        stop_target=f["stop.target_accuracy"],
        stop_tolerance=f["stop.tolerance"],
        stop_patience=f["stop.patience"],
    )
    if cfg.scheme == "fedova":
        return FedOvaRun(
            component_model_spec(cfg, train),
            train.num_classes,
            train,
            eval_data,
            component_optimizer=f["fedova.component_optimizer"],
            balanced_sampling=f["fedova.balanced_sampling"],
            **common,
        )
    spec = build_model_spec(cfg, train)
    if spec.kind == "binary-logistic" and train.num_classes != 2:
        raise ConfigError(
            "model.kind=binary-logistic needs a two-class dataset "
            f"(got {train.num_classes} classes); use scheme=fedova or another model"
        )
    return FederatedRun(spec, train, eval_data, **common)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(cfg: ExperimentConfig, seed: int, report: RoundReport) -> dict:
    return {
        "run_id": cfg.derived_run_id(seed),
        "seed": seed,
        "scheme": cfg.scheme,
        "optimizer": cfg.flat["round.optimizer"]
        if cfg.scheme == "fedavg"
        else cfg.flat["fedova.component_optimizer"],
        "round": report.round_index,
        "train_loss": report.train_loss,
        "eval_accuracy": report.eval_accuracy,
        "comm_scalars_cum": report.comm_scalars_cum,
        "curvature_min": report.curvature_min,
        "curvature_max": report.curvature_max,
        "skips": report.skips,
        "elapsed_ms": round(report.elapsed_ms, 3),
    }


def convergence_round(rows, target_accuracy: float, patience: int = 3):
    """First round whose accuracy starts `patience` consecutive evaluations
    at or above the target; None if that never happens."""
    if patience < 1:
        raise ValueError("patience must be >= 1")
    rows = list(rows)
    streak = 0
    start_round = None
    for row in rows:
        if float(row["eval_accuracy"]) >= target_accuracy:
            if streak == 0:
                start_round = int(row["round"])
            streak += 1
            if streak >= patience:
                return start_round
        else:
            streak = 0
            start_round = None
    return None


def final_accuracy(rows, window: int = 20) -> float:
    """Mean eval accuracy of the last `window` evaluation rows."""
    accs = [float(r["eval_accuracy"]) for r in rows]
    if not accs:
        raise ValueError("no evaluation rows")
    return float(np.mean(accs[-window:]))


@dataclass
class RunResult:
    run_dir: str
    rows: list
    summary: dict


def run(cfg: ExperimentConfig, output_dir: str | None = None, seed: int | None = None) -> RunResult:
    """Execute one run, streaming metrics rows to disk as rounds finish."""
    seed = cfg.seed if seed is None else seed
    out_root = output_dir or os.environ.get("FEDFIM_OUTPUT_DIR") or cfg.output_dir
    run_dir = os.path.join(out_root, cfg.derived_run_id(seed))
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "effective-config.cfg"), "w", encoding="utf-8") as f:
        f.write(cfg.dump())

    engine = build_engine(cfg, seed)
    eval_every = cfg.flat["eval.every"]
    rows = []
    t0 = time.perf_counter()
    component_metrics = (
        cfg.scheme == "fedova" and cfg.flat["fedova.component_metrics"]
    )
    comp_file = comp_writer = None
    try:
        metrics_path = os.path.join(run_dir, "metrics.csv")
        with open(metrics_path, "w", encoding="utf-8", newline="") as sink:
            writer = csv.DictWriter(sink, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            if component_metrics:
                comp_file = open(os.path.join(run_dir, "components.csv"), "w",
                                 encoding="utf-8", newline="")
                comp_writer = csv.writer(comp_file)
                comp_writer.writerow(
                    ["round"] + [f"class_{i}" for i in range(engine.num_classes)]
                )

            def emit(report):
                row = {k: _fmt(v) for k, v in report_row(cfg, seed, report).items()}
                writer.writerow(row)
                sink.flush()
                rows.append(report_row(cfg, seed, report))
                if comp_writer is not None:
                    comp_writer.writerow(
                        [report.round_index]
                        + [repr(a) for a in engine.component_eval_accuracies()]
                    )

            emit(engine.initial_report())
            streak = 0
            target = cfg.flat["stop.target_accuracy"]
            for _ in range(cfg.flat["round.total_rounds"]):
                report = engine.run_round()
                if report.round_index % eval_every == 0:
                    emit(report)
                if target > 0.0:
                    if report.eval_accuracy >= target - cfg.flat["stop.tolerance"]:
                        streak += 1
                        if streak >= cfg.flat["stop.patience"]:
                            break
                    else:
                        streak = 0
    finally:
        if comp_file is not None:
            comp_file.close()

    eval_rows = [r for r in rows if r["round"] > 0] or rows
    summary = {
        "run_id": cfg.derived_run_id(seed),
        "seed": seed,
        "rounds_run": rows[-1]["round"],
        "final_accuracy": final_accuracy(eval_rows),
        "convergence_round": convergence_round(
            eval_rows, cfg.flat["stop.target_accuracy"], cfg.flat["stop.patience"]
        )
        if cfg.flat["stop.target_accuracy"] > 0.0
        else None,
        "total_comm_scalars": rows[-1]["comm_scalars_cum"],
        "wall_seconds": round(time.perf_counter() - t0, 3),
    }
    with open(os.path.join(run_dir, "summary.txt"), "w", encoding="utf-8") as f:
        for key, value in summary.items():
            f.write(f"{key} = {value}\n")
    return RunResult(run_dir=run_dir, rows=rows, summary=summary)


# -- comparison tables -----------------------------------------------------


@dataclass
class CompareRow:
    label: str
    overrides: list


def parse_compare_spec(path) -> tuple[str, list[CompareRow]]:
    """Table spec: `base <config-path>` then `row <label> key=value ...`."""
    base = None
    rows: list[CompareRow] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if parts[0] == "base":
                if len(parts) != 2:
                    raise ConfigError(f"{path}:{lineno}: base takes exactly one path")
                base = parts[1]
            elif parts[0] == "row":
                if len(parts) < 2:
                    raise ConfigError(f"{path}:{lineno}: row needs a label")
                rows.append(CompareRow(label=parts[1], overrides=parts[2:]))
            else:
                raise ConfigError(f"{path}:{lineno}: expected 'base' or 'row', got {parts[0]!r}")
    if base is None:
        raise ConfigError(f"{path}: missing 'base <config-path>' line")
    if not rows:
        raise ConfigError(f"{path}: no comparison rows")
    return base, rows


def compare(base_cfg_path, rows: list[CompareRow], output_dir: str | None = None):
    """Run every row over the seed sweep; rows are reported in given order."""
    from .config import parse_config

    table = []
    out_root = None
    for entry in rows:
        cfg = parse_config(base_cfg_path, list(entry.overrides) + [f"run_id={entry.label}"])
        out_root = output_dir or os.environ.get("FEDFIM_OUTPUT_DIR") or cfg.output_dir
        finals, conv_rounds, comms = [], [], []
        for seed in cfg.seeds:
            result = run(cfg, output_dir=out_root, seed=seed)
            eval_rows = [r for r in result.rows if r["round"] > 0] or result.rows
            finals.append(final_accuracy(eval_rows))
            if cfg.flat["stop.target_accuracy"] > 0.0:
                conv = convergence_round(
                    eval_rows, cfg.flat["stop.target_accuracy"], cfg.flat["stop.patience"]
                )
                if conv is not None:
                    conv_rounds.append(conv)
            comms.append(result.rows[-1]["comm_scalars_cum"])
        table.append(
            {
                "label": entry.label,
                "seeds": len(cfg.seeds),
                "final_accuracy_mean": float(np.mean(finals)),
                "final_accuracy_std": float(np.std(finals)),
                "convergence_round_mean": float(np.mean(conv_rounds)) if conv_rounds else None,
                "comm_scalars_mean": float(np.mean(comms)),
            }
        )
    if out_root:
        os.makedirs(out_root, exist_ok=True)
        with open(os.path.join(out_root, "comparison.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(table[0].keys()))
            writer.writeheader()
            for row in table:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    return table


def format_table(table) -> str:
    header = f"{'row':<24} {'seeds':>5} {'final_acc':>10} {'std':>8} {'conv_round':>10} {'comm_scalars':>14}"
    lines = [header, "-" * len(header)]
    for row in table:
        conv = "-" if row["convergence_round_mean"] is None else f"{row['convergence_round_mean']:.1f}"
        lines.append(
            f"{row['label']:<24} {row['seeds']:>5d} {row['final_accuracy_mean']:>10.4f} "
            f"{row['final_accuracy_std']:>8.4f} {conv:>10} {row['comm_scalars_mean']:>14.0f}"
        )
    return "\n".join(lines)
