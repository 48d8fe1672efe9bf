"""One-vs-all federated training: n independent binary experts.

An n-class task is decomposed into n binary classifiers.  Each round, a
participating client trains only the classifiers whose class ids appear in
its own labels (on its data relabeled class-vs-rest), and the server
averages each classifier's returned parameter vectors with equal weights.
Classifiers whose group is empty that round are simply left unchanged, so
the components progress asynchronously.  Prediction takes the class whose
component reports the highest positive-class probability, ties going to the
lowest class id.

Components can alternatively be driven by the quasi-Newton server optimizer
(one step per round per component, using that component's group as its
client set); plain parameter averaging is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import time

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionError, NumericError
from .data import Dataset, PartitionPlan
from .federation import (
    STREAM_CLIENT_BASE,
    STREAM_INIT,
    STREAM_SAMPLER,
    ClientState,
    CommunicationLedger,
    RoundConfig,
    RoundReport,
    _ceil_log,
    client_update_fim,
    client_update_sgd,
    sample_clients,
)
from .lbfgs import (
    aggregate_fim,
    curvature_ratio,
    empty_memory,
    smooth_y,
    two_loop_direction,
    update_memory,
)
from .models import ModelSpec, forward_loss, init_params, predict_proba
from .numerics import FLOAT, stream, weighted_average

COMPONENT_OPTIMIZERS = ("averaging", "fim-lbfgs")


@dataclass(frozen=True)
class OvaEnsemble:
    """n binary components over a shared input space; component i answers
    'is this class i?'."""

    num_classes: int
    component_spec: ModelSpec
    components: tuple  # n flat parameter vectors

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("an ensemble needs at least two classes")
        if len(self.components) != self.num_classes:
            raise DimensionError(
                f"{len(self.components)} components for {self.num_classes} classes"
            )
        for w in self.components:
            if w.shape != (self.component_spec.dim,):
                raise DimensionError("component parameter length does not match its spec")


def binary_relabel(dataset: Dataset, class_id: int) -> Dataset:
    """Class-vs-rest view: label 1 where the original label equals class_id.

    Features are the same array (no copy); sample order is preserved.  A
    dataset holding no class_id samples is fine: it relabels to all zeros.
    """
    if not (0 <= class_id < dataset.num_classes):
        raise ConfigError(f"class {class_id} outside [0, {dataset.num_classes})")
    return Dataset(
        features=dataset.features,
        labels=(dataset.labels == class_id).astype(np.int64),
        num_classes=2,
        name=f"{dataset.name}|class{class_id}",
    )


def select_components(label_set) -> np.ndarray:
    """Classifier ids a client trains: exactly the labels it holds."""
    ids = np.unique(np.asarray(label_set, dtype=np.int64))
    if ids.size == 0:
        raise DegenerateInputError("client label set is empty")
    return ids


def group_aggregate(ensemble: OvaEnsemble, groups: dict) -> OvaEnsemble:
    """Unweighted mean of each group's returned parameters.

    `groups` maps classifier id -> list of parameter vectors; ids with no
    returns keep their current parameters (asynchronous update).
    """
    new_components = list(ensemble.components)
    for cid, returned in groups.items():
        if not returned:
            continue
        stacked = np.stack([np.asarray(w, dtype=FLOAT) for w in returned])
        if np.all(stacked == stacked[0]):
            # identical returns must aggregate to themselves bit-exactly;
            # summing then dividing would round
            new_components[cid] = stacked[0].copy()
        else:
            new_components[cid] = weighted_average(returned, [1.0] * len(returned))
    return replace(ensemble, components=tuple(new_components))


def ensemble_confidences(ensemble: OvaEnsemble, features) -> np.ndarray:
    """(b, n) matrix of positive-class probabilities, one column per class."""
    cols = [
        predict_proba(ensemble.component_spec, w, features)[:, 1]
        for w in ensemble.components
    ]
    return np.column_stack(cols)


def ensemble_predict(ensemble: OvaEnsemble, features) -> np.ndarray:
    """argmax over component confidences; ties resolve to the lowest class id."""
    return ensemble_confidences(ensemble, features).argmax(axis=1)


def ensemble_accuracy(ensemble: OvaEnsemble, dataset: Dataset) -> float:
    return float(np.mean(ensemble_predict(ensemble, dataset.features) == dataset.labels))


class FedOvaRun:
    """Round engine for the one-vs-all scheme.

    Communication is tallied per component actually moved: a client only
    downloads and uploads the classifiers matching its own labels.
    """

    scheme = "fedova"

    def __init__(
        self,
        component_spec: ModelSpec,
        num_classes: int,
        train: Dataset,
        eval_data: Dataset,
        plan: PartitionPlan,
        cfg: RoundConfig,
        seed: int,
        shared_indices: np.ndarray | None = None,
        component_optimizer: str = "averaging",
        balanced_sampling: bool = False,
        stop_target: float = 0.0,
        stop_tolerance: float = 0.0,
        stop_patience: int = 3,
    ):
        if component_optimizer not in COMPONENT_OPTIMIZERS:
            raise ConfigError(
                f"component_optimizer must be one of {COMPONENT_OPTIMIZERS}"
            )
        if num_classes < 2:
            raise ConfigError("fedova needs at least two classes")
        if plan.num_clients * cfg.participation < 1.0:
            raise ConfigError("participation * clients must be >= 1")
        self.num_classes = num_classes
        self.train = train
        self.eval_data = eval_data
        self.cfg = cfg
        self.seed = seed
        self.component_optimizer = component_optimizer
        self.balanced_sampling = balanced_sampling
        self.stop_target = stop_target
        self.stop_tolerance = stop_tolerance
        self.stop_patience = stop_patience

        init_rng = stream(seed, STREAM_INIT)
        self.ensemble = OvaEnsemble(
            num_classes=num_classes,
            component_spec=component_spec,
            components=tuple(init_params(component_spec, init_rng) for _ in range(num_classes)),
        )
        self.clients = []
        self.client_components = []
        for cid, idx in enumerate(plan.assignment):
            if shared_indices is not None:
                idx = np.concatenate([idx, shared_indices])
            idx = np.asarray(idx, dtype=np.int64)
            self.clients.append(ClientState(cid, idx, stream(seed, STREAM_CLIENT_BASE + cid)))
            self.client_components.append(select_components(train.labels[idx]))
        self.binary_views = [binary_relabel(train, i) for i in range(num_classes)]
        self.sampler = stream(seed, STREAM_SAMPLER)
        self.memories = [
            empty_memory(cfg.memory_size, cfg.h0_mode) for _ in range(num_classes)
        ]
        self.ledger = CommunicationLedger()
        self.round_index = 0
        self.last_groups: dict[int, list[int]] = {}

    # -- reporting helpers -------------------------------------------------

    def train_loss(self) -> float:
        """Mean binary cross-entropy of the components over the training set."""
        losses = [
            forward_loss(
                self.ensemble.component_spec,
                w,
                self.train.features,
                self.binary_views[i].labels,
            )
            for i, w in enumerate(self.ensemble.components)
        ]
        return float(np.mean(losses))

    def eval_accuracy(self) -> float:
        return ensemble_accuracy(self.ensemble, self.eval_data)

    def component_eval_accuracies(self) -> list[float]:
        """Per-component binary accuracy on the eval set (optional metrics)."""
        out = []
        for i, w in enumerate(self.ensemble.components):
            proba = predict_proba(self.ensemble.component_spec, w, self.eval_data.features)
            pred = (proba[:, 1] >= 0.5).astype(np.int64)
            out.append(float(np.mean(pred == (self.eval_data.labels == i))))
        return out

    def initial_report(self) -> RoundReport:
        t0 = time.perf_counter()
        return RoundReport(
            round_index=0,
            train_loss=self.train_loss(),
            eval_accuracy=self.eval_accuracy(),
            comm_scalars=0,
            comm_scalars_cum=0,
            skips=0,
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
        )

    def _train_indices(self, client: ClientState, class_id: int) -> np.ndarray:
        """Client indices used for one component, optionally class-balanced."""
        if not self.balanced_sampling:
            return client.indices
        mask = self.train.labels[client.indices] == class_id
        pos = client.indices[mask]
        neg = client.indices[~mask]
        if len(pos) == 0 or len(neg) <= len(pos):
            return client.indices
        keep = client.rng.choice(neg, size=len(pos), replace=False)
        return np.sort(np.concatenate([pos, keep]))

    # -- round drivers -----------------------------------------------------

    def run_round(self) -> RoundReport:
        t0 = time.perf_counter()
        self.round_index += 1
        participants = sample_clients(
            [c.client_id for c in self.clients], self.cfg.participation, self.sampler
        )
        if self.component_optimizer == "averaging":
            diag = self._round_averaging(participants)
        else:
            diag = self._round_fim_lbfgs(participants)
        loss = self.train_loss()
        if not np.isfinite(loss):
            raise NumericError(
                f"non-finite ensemble training loss at round {self.round_index}"
            )
        report = RoundReport(
            round_index=self.round_index,
            train_loss=loss,
            eval_accuracy=self.eval_accuracy(),
            comm_scalars=self.ledger.rounds[-1].total,
            comm_scalars_cum=self.ledger.cumulative_total,
            skips=sum(m.skips for m in self.memories),
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
            **diag,
        )
        return report

    def _round_averaging(self, participants: np.ndarray) -> dict:
        cfg = self.cfg
        d = self.ensemble.component_spec.dim
        led = self.ledger.open_round()
        groups: dict[int, list[np.ndarray]] = {}
        members: dict[int, list[int]] = {}
        for cid in participants:
            client = self.clients[cid]
            ids = self.client_components[cid]
            led.broadcast += len(ids) * d  # only the selected components move
            for class_id in ids:
                shim = ClientState(cid, self._train_indices(client, class_id), client.rng)
                delta, _ = client_update_sgd(
                    self.ensemble.component_spec,
                    self.binary_views[class_id],
                    shim,
                    self.ensemble.components[class_id],
                    cfg.local_epochs,
                    cfg.batch_size,
                    cfg.learning_rate,
                )
                groups.setdefault(int(class_id), []).append(
                    self.ensemble.components[class_id] + delta
                )
                members.setdefault(int(class_id), []).append(int(cid))
                led.gathered += d
        self.ensemble = group_aggregate(self.ensemble, groups)
        self.last_groups = members
        return {}

    def _round_fim_lbfgs(self, participants: np.ndarray) -> dict:
        cfg = self.cfg
        d = self.ensemble.component_spec.dim
        led = self.ledger.open_round()
        members: dict[int, list[int]] = {}
        for cid in participants:
            for class_id in self.client_components[cid]:
                members.setdefault(int(class_id), []).append(int(cid))
        new_components = list(self.ensemble.components)
        ratios: list[float] = []
        fim_max = None
        for class_id in sorted(members):
            group = members[class_id]
            tau = cfg.tau if cfg.tau >= 1 else len(group)
            log_term = _ceil_log(tau)
            led.broadcast += d
            fims, grads, sizes = [], [], []
            for cid in group:
                client = self.clients[cid]
                shim = ClientState(cid, self._train_indices(client, class_id), client.rng)
                fim, grad, n_k = client_update_fim(
                    self.ensemble.component_spec,
                    self.binary_views[class_id],
                    shim,
                    new_components[class_id],
                    cfg.batch_size,
                    cfg.fim_damping,
                )
                fims.append(fim)
                grads.append(grad)
                sizes.append(float(n_k))
            led.gathered += d * log_term
            if cfg.gradient_weighting == "size":
                g = weighted_average(grads, sizes)
            else:
                g = weighted_average(grads, [1.0] * len(grads))
            direction = two_loop_direction(self.memories[class_id], g)
            step = cfg.learning_rate * direction
            new_components[class_id] = new_components[class_id] + step
            led.broadcast += d
            agg = aggregate_fim(fims)
            led.gathered += d * log_term
            y = smooth_y(agg, step)
            self.memories[class_id] = update_memory(
                self.memories[class_id], step, y, cfg.cautious_eps
            )
            led.pair_maintenance += cfg.memory_size * cfg.memory_size + cfg.memory_size
            led.pair_maintenance += cfg.memory_size + d
            ratios.extend(curvature_ratio(p) for p in self.memories[class_id].pairs)
            peak = float(agg.diag.max())
            fim_max = peak if fim_max is None else max(fim_max, peak)
        self.ensemble = replace(self.ensemble, components=tuple(new_components))
        self.last_groups = members
        return {
            "curvature_min": min(ratios) if ratios else None,
            "curvature_max": max(ratios) if ratios else None,
            "fim_diag_max": fim_max,
        }

    def run(self) -> list[RoundReport]:
        reports = []
        streak = 0
        for _ in range(self.cfg.total_rounds):
            report = self.run_round()
            reports.append(report)
            if self.stop_target > 0.0:
                if report.eval_accuracy >= self.stop_target - self.stop_tolerance:
                    streak += 1
                    if streak >= self.stop_patience:
                        break
                else:
                    streak = 0
        return reports


def run_fedova(
    component_spec: ModelSpec,
    num_classes: int,
    train: Dataset,
    eval_data: Dataset,
    plan: PartitionPlan,
    cfg: RoundConfig,
    seed: int,
    **kwargs,
) -> list[RoundReport]:
    """Convenience wrapper: build a one-vs-all engine and run it."""
    return FedOvaRun(
        component_spec, num_classes, train, eval_data, plan, cfg, seed, **kwargs
    ).run()
