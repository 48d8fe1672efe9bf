"""Round-based server/client training engine with an exact message ledger.

One engine drives three server optimizers over the same client population:

  fedavg-sgd    clients run E epochs of mini-batch SGD, server averages the
                returned deltas weighted by local dataset size
  fedavg-adam   same protocol with per-client Adam (moments reset per round)
  fim-lbfgs     clients return a stochastic batch gradient plus a diagonal
                empirical Fisher estimate; the server takes one quasi-Newton
                step per round and maintains the curvature-pair memory

Every scalar that would cross the network in a real deployment is tallied in
a CommunicationLedger.  The per-round totals of the two protocols match the
closed forms `comm_cost_proposed` / `comm_cost_fedavg` exactly, so the cost
model is testable rather than asymptotic hand-waving.

All randomness flows from (seed, stream_id) pairs: the server sampler and
each client own private streams, which makes runs bit-reproducible and makes
client updates independent of visit order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, NumericError
from .lbfgs import (
    FimDiagonal,
    OptimizerConfig,
    aggregate_fim,
    curvature_ratio,
    empty_memory,
    fim_diagonal,
    smooth_y,
    two_loop_direction,
    update_memory,
)
from .models import (
    ModelSpec,
    accuracy,
    batch_gradient,
    forward_loss,
    init_params,
    per_sample_gradients,
)
from .numerics import FLOAT, stream, weighted_average
from .data import Dataset, PartitionPlan

OPTIMIZERS = ("fim-lbfgs", "fedavg-sgd", "fedavg-adam")

# stream ids reserved by the engine (data.py uses 11..14)
STREAM_INIT = 1
STREAM_SAMPLER = 2
STREAM_CLIENT_BASE = 1 << 20


@dataclass(frozen=True)
class RoundConfig:
    """Per-round protocol knobs shared by all optimizers."""

    optimizer: str = "fedavg-sgd"
    total_rounds: int = 100  # T
    participation: float = 0.2  # q
    local_epochs: int = 5  # E
    batch_size: int = 15  # B
    learning_rate: float = 0.1  # eta
    memory_size: int = 10  # m
    tau: int = 0  # cost-model client/block count; 0 = participants per round
    cautious_eps: float = 1e-8
    fim_damping: float = 1e-6
    h0_mode: str = "gamma-scaled"
    gradient_weighting: str = "size"  # local-size weights for the gathered gradient
    fim_weighting: str = "uniform"  # plain 1/K mean of the Fisher diagonals
    fedavg_weighting: str = "size"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if self.total_rounds < 0:
            raise ConfigError("total_rounds must be >= 0")
        if not (0.0 < self.participation <= 1.0):
            raise ConfigError("participation must lie in (0, 1]")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.memory_size < 1:
            raise ConfigError("memory_size must be >= 1")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0 (0 means participants per round)")
        for name in ("gradient_weighting", "fedavg_weighting"):
            if getattr(self, name) not in ("size", "uniform"):
                raise ConfigError(f"{name} must be 'size' or 'uniform'")
        if self.fim_weighting not in ("uniform", "size"):
            raise ConfigError("fim_weighting must be 'uniform' or 'size'")


@dataclass
class ClientState:
    """A client's slice of the training data plus its private RNG stream."""

    client_id: int
    indices: np.ndarray
    rng: np.random.Generator

    @property
    def num_samples(self) -> int:
        return len(self.indices)


@dataclass
class LedgerRound:
    broadcast: int = 0
    gathered: int = 0
    pair_maintenance: int = 0

    @property
    def total(self) -> int:
        return self.broadcast + self.gathered + self.pair_maintenance


class CommunicationLedger:
    """Per-round tally of transmitted scalars (unit: one 64-bit value)."""

    def __init__(self):
        self.rounds: list[LedgerRound] = []

    def open_round(self) -> LedgerRound:
        row = LedgerRound()
        self.rounds.append(row)
        return row

    def round_total(self, index: int) -> int:
        return self.rounds[index].total

    @property
    def cumulative_total(self) -> int:
        return sum(r.total for r in self.rounds)

    @property
    def totals(self) -> tuple[int, int, int]:
        return (
            sum(r.broadcast for r in self.rounds),
            sum(r.gathered for r in self.rounds),
            sum(r.pair_maintenance for r in self.rounds),
        )


@dataclass
class RoundReport:
    round_index: int
    train_loss: float
    eval_accuracy: float
    comm_scalars: int
    comm_scalars_cum: int
    skips: int
    elapsed_ms: float
    curvature_min: float | None = None
    curvature_max: float | None = None
    fim_diag_max: float | None = None
    new_pair_ratio: float | None = None


def _ceil_log(tau: int) -> int:
    """Tree-reduction depth factor of the cost model; 0 for a single block."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return int(math.ceil(math.log(tau))) if tau > 1 else 0


def comm_cost_proposed(d: int, tau: int, m: int) -> int:
    """Exact per-round scalar count of the quasi-Newton protocol.

    d + d*ceil(log tau)   model broadcast + gradient gather
    d + d*ceil(log tau)   step broadcast + smoothed-product gather
    m^2 + m               pair bookkeeping upload
    m + d                 coefficient search / result readback
    """
    if d < 1 or tau < 1 or m < 1:
        raise ValueError("d, tau, m must all be >= 1")
    log_term = _ceil_log(tau)
    return d + d * log_term + d + d * log_term + (m * m + m) + (m + d)


def comm_cost_fedavg(d: int, k: int) -> int:
    """Exact per-round scalar count of the averaging baseline: k*d + d."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be >= 1")
    return k * d + d


def sample_clients(client_ids, q: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement of max(1, round(q*K)) ids, sorted."""
    ids = np.asarray(client_ids, dtype=np.int64)
    if ids.size == 0:
        raise DegenerateInputError("no clients to sample from")
    if not (0.0 < q <= 1.0):
        raise ConfigError("participation fraction must lie in (0, 1]")
    size = max(1, int(round(q * ids.size)))
    picked = rng.choice(ids, size=size, replace=False)
    return np.sort(picked)


def client_update_sgd(
    spec: ModelSpec,
    data: Dataset,
    client: ClientState,
    params: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
) -> tuple[np.ndarray, int]:
    """E epochs of shuffled mini-batch SGD on the client's slice.

    Returns (local params - received params, local sample count).
    """
    w = np.array(params, dtype=FLOAT, copy=True)
    n_k = client.num_samples
    for _ in range(epochs):
        order = client.rng.permutation(n_k)
        for start in range(0, n_k, batch_size):
            sel = client.indices[order[start : start + batch_size]]
            w -= lr * batch_gradient(spec, w, data.features[sel], data.labels[sel])
    return w - params, n_k


def client_update_adam(
    spec: ModelSpec,
    data: Dataset,
    client: ClientState,
    params: np.ndarray,
    epochs: int,
    batch_size: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, int]:
    """Local Adam with bias correction; moments are reset every round."""
    w = np.array(params, dtype=FLOAT, copy=True)
    n_k = client.num_samples
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    t = 0
    for _ in range(epochs):
        order = client.rng.permutation(n_k)
        for start in range(0, n_k, batch_size):
            sel = client.indices[order[start : start + batch_size]]
            g = batch_gradient(spec, w, data.features[sel], data.labels[sel])
            t += 1
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return w - params, n_k


def client_update_fim(
    spec: ModelSpec,
    data: Dataset,
    client: ClientState,
    params: np.ndarray,
    batch_size: int,
    damping: float,
) -> tuple[FimDiagonal, np.ndarray, int]:
    """One stochastic batch: diagonal Fisher estimate plus the batch gradient.

    The batch is drawn without replacement from the client's slice; when the
    requested size covers the whole slice the batch is the slice itself.
    """
    idx = client.indices
    if batch_size >= len(idx):
        batch = idx
    else:
        batch = np.sort(client.rng.choice(idx, size=batch_size, replace=False))
    grads = per_sample_gradients(spec, params, data.features[batch], data.labels[batch])
    fim = fim_diagonal(grads, damping=damping)
    return fim, grads.mean(axis=0), len(idx)


def fedavg_aggregate(params, updates, weighting: str = "size") -> np.ndarray:
    """params + weighted mean of client deltas, sorted by client id first.

    `updates` holds (client_id, delta, n_k) triples; size weighting uses
    n_k / sum(n_k), uniform weighting a plain mean.
    """
    if not updates:
        raise DegenerateInputError("no client updates to aggregate")
    ordered = sorted(updates, key=lambda u: u[0])
    deltas = [u[1] for u in ordered]
    if weighting == "size":
        weights = [float(u[2]) for u in ordered]
    else:
        weights = [1.0] * len(ordered)
    return np.asarray(params, dtype=FLOAT) + weighted_average(deltas, weights)


class FederatedRun:
    """Single-owner engine for one experiment: one optimizer, one seed.

    Client updates within a round are mutually independent (each client has
    its own RNG stream), and the server reduction is order-independent, so
    the rounds could execute client work concurrently without changing any
    output.  This implementation runs them sequentially.
    """

    scheme = "fedavg"

    def __init__(
        self,
        spec: ModelSpec,
        train: Dataset,
        eval_data: Dataset,
        plan: PartitionPlan,
        cfg: RoundConfig,
        seed: int,
        shared_indices: np.ndarray | None = None,
        stop_target: float = 0.0,
        stop_tolerance: float = 0.0,
        stop_patience: int = 3,
    ):
        if plan.num_clients * cfg.participation < 1.0:
            raise ConfigError("participation * clients must be >= 1")
        self.spec = spec
        self.train = train
        self.eval_data = eval_data
        self.cfg = cfg
        self.seed = seed
        self.stop_target = stop_target
        self.stop_tolerance = stop_tolerance
        self.stop_patience = stop_patience
        self.clients = []
        for cid, idx in enumerate(plan.assignment):
            if shared_indices is not None:
                idx = np.concatenate([idx, shared_indices])
            self.clients.append(
                ClientState(cid, np.asarray(idx, dtype=np.int64), stream(seed, STREAM_CLIENT_BASE + cid))
            )
        self.params = init_params(spec, stream(seed, STREAM_INIT))
        self.sampler = stream(seed, STREAM_SAMPLER)
        self.opt = OptimizerConfig(
            eta=cfg.learning_rate,
            m=cfg.memory_size,
            cautious_eps=cfg.cautious_eps,
            h0_mode=cfg.h0_mode,
            fim_damping=cfg.fim_damping,
        )
        self.memory = empty_memory(self.opt.m, self.opt.h0_mode)
        self.ledger = CommunicationLedger()
        self.round_index = 0

    # -- reporting helpers -------------------------------------------------

    def train_loss(self) -> float:
        return forward_loss(self.spec, self.params, self.train.features, self.train.labels)

    def eval_accuracy(self) -> float:
        return accuracy(self.spec, self.params, self.eval_data.features, self.eval_data.labels)

    def initial_report(self) -> RoundReport:
        """Round-0 snapshot before any communication has happened."""
        t0 = time.perf_counter()
        report = RoundReport(
            round_index=0,
            train_loss=self.train_loss(),
            eval_accuracy=self.eval_accuracy(),
            comm_scalars=0,
            comm_scalars_cum=0,
            skips=0,
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
        )
        return report

    def _check_state(self, loss: float):
        if not np.isfinite(loss) or not np.all(np.isfinite(self.params)):
            raise NumericError(
                f"non-finite model state at round {self.round_index} "
                f"(train loss {loss!r}); aborting the run"
            )

    # -- round drivers -----------------------------------------------------

    def run_round(self) -> RoundReport:
        t0 = time.perf_counter()
        self.round_index += 1
        participants = sample_clients(
            [c.client_id for c in self.clients], self.cfg.participation, self.sampler
        )
        if self.cfg.optimizer == "fim-lbfgs":
            diag = self._round_fim_lbfgs(participants)
        else:
            diag = self._round_fedavg(participants)
        loss = self.train_loss()
        self._check_state(loss)
        report = RoundReport(
            round_index=self.round_index,
            train_loss=loss,
            eval_accuracy=self.eval_accuracy(),
            comm_scalars=self.ledger.rounds[-1].total,
            comm_scalars_cum=self.ledger.cumulative_total,
            skips=self.memory.skips,
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
            **diag,
        )
        return report

    def _round_fedavg(self, participants: np.ndarray) -> dict:
        cfg = self.cfg
        d = self.spec.dim
        led = self.ledger.open_round()
        led.broadcast += d  # global model out
        updates = []
        for cid in participants:
            client = self.clients[cid]
            if cfg.optimizer == "fedavg-sgd":
                delta, n_k = client_update_sgd(
                    self.spec, self.train, client, self.params,
                    cfg.local_epochs, cfg.batch_size, cfg.learning_rate,
                )
            else:
                delta, n_k = client_update_adam(
                    self.spec, self.train, client, self.params,
                    cfg.local_epochs, cfg.batch_size, cfg.learning_rate,
                )
            updates.append((int(cid), delta, n_k))
            led.gathered += d  # each participant uploads its delta
        self.params = fedavg_aggregate(self.params, updates, cfg.fedavg_weighting)
        return {}

    def _round_fim_lbfgs(self, participants: np.ndarray) -> dict:
        cfg, opt = self.cfg, self.opt
        d = self.spec.dim
        tau = cfg.tau if cfg.tau >= 1 else len(participants)
        log_term = _ceil_log(tau)
        led = self.ledger.open_round()

        led.broadcast += d  # global model out
        fims, grads, sizes = [], [], []
        for cid in participants:
            fim, grad, n_k = client_update_fim(
                self.spec, self.train, self.clients[cid], self.params,
                cfg.batch_size, opt.fim_damping,
            )
            fims.append(fim)
            grads.append(grad)
            sizes.append(float(n_k))
        led.gathered += d * log_term  # tree-reduced gradient sum

        if cfg.gradient_weighting == "size":
            g = weighted_average(grads, sizes)
        else:
            g = weighted_average(grads, [1.0] * len(grads))
        direction = two_loop_direction(self.memory, g)
        step = opt.eta * direction
        self.params = self.params + step

        led.broadcast += d  # step vector out for the smoothing product
        if cfg.fim_weighting == "uniform":
            agg = aggregate_fim(fims)
        else:
            diag = weighted_average([f.diag for f in fims], sizes)
            agg = FimDiagonal(diag=diag, batch_size=sum(f.batch_size for f in fims))
        led.gathered += d * log_term  # tree-reduced smoothed products

        y = smooth_y(agg, step)
        skips_before = self.memory.skips
        self.memory = update_memory(self.memory, step, y, opt.cautious_eps)
        stored = self.memory.skips == skips_before
        led.pair_maintenance += opt.m * opt.m + opt.m
        led.pair_maintenance += opt.m + d  # coefficient search / readback

        ratios = [curvature_ratio(p) for p in self.memory.pairs]
        new_ratio = None
        if self.memory.pairs and stored:
            new_ratio = curvature_ratio(self.memory.pairs[-1])
        return {
            "curvature_min": min(ratios) if ratios else None,
            "curvature_max": max(ratios) if ratios else None,
            "fim_diag_max": float(agg.diag.max()),
            "new_pair_ratio": new_ratio,
        }

    # -- full run ----------------------------------------------------------

    def run(self) -> list[RoundReport]:
        """Run up to total_rounds, stopping early once the accuracy target
        has held for `stop_patience` consecutive evaluations."""
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


def run_experiment(
    spec: ModelSpec,
    train: Dataset,
    eval_data: Dataset,
    plan: PartitionPlan,
    cfg: RoundConfig,
    seed: int,
    **kwargs,
) -> list[RoundReport]:
    """Convenience wrapper: build an engine and run it to completion."""
    return FederatedRun(spec, train, eval_data, plan, cfg, seed, **kwargs).run()
