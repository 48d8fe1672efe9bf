"""Limited-memory quasi-Newton core with Fisher-smoothed curvature pairs.

Instead of raw gradient differences, the step/curvature pairs (s, y) are
built as y = D s where D is a diagonal empirical Fisher estimate (mean of
elementwise-squared per-sample gradients, optionally damped).  Because D is
positive semidefinite and damping keeps it strictly positive, curvature
ratios ||y||^2 / (y.s) stay inside [min D, max D], and a cautious threshold
rejects any pair that would break positive definiteness of the implicit
inverse-Hessian.

The search direction -H g is evaluated by the standard two-loop recursion;
`dense_bfgs_oracle` builds H explicitly (test-scale dimensions only) so the
recursion can be cross-checked against the textbook rank-two update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError
from .numerics import FLOAT, require_finite

H0_MODES = ("gamma-scaled", "identity")


@dataclass(frozen=True)
class FimDiagonal:
    """Diagonal curvature surrogate: per-coordinate mean of squared gradients."""

    diag: np.ndarray
    batch_size: int


@dataclass(frozen=True)
class CurvaturePair:
    s: np.ndarray
    y: np.ndarray
    rho: float  # 1 / (y . s)


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float
    m: int
    cautious_eps: float = 1e-8
    h0_mode: str = "gamma-scaled"
    fim_damping: float = 1e-6

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.m < 1:
            raise ValueError("memory size must be >= 1")
        if self.cautious_eps <= 0:
            raise ValueError("cautious_eps must be positive")
        if self.fim_damping < 0:
            raise ValueError("fim_damping must be nonnegative")
        if self.h0_mode not in H0_MODES:
            raise ValueError(f"h0_mode must be one of {H0_MODES}")


@dataclass(frozen=True)
class LbfgsMemory:
    """Bounded FIFO of accepted curvature pairs, oldest first."""

    capacity: int
    h0_mode: str = "gamma-scaled"
    pairs: tuple = field(default_factory=tuple)
    skips: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.h0_mode not in H0_MODES:
            raise ValueError(f"h0_mode must be one of {H0_MODES}")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def h0_scale(self) -> float:
        """Scalar multiple of the identity used as the initial inverse Hessian."""
        if self.h0_mode == "identity" or not self.pairs:
            return 1.0
        newest = self.pairs[-1]
        return float(newest.s @ newest.y) / float(newest.y @ newest.y)


def empty_memory(capacity: int, h0_mode: str = "gamma-scaled") -> LbfgsMemory:
    return LbfgsMemory(capacity=capacity, h0_mode=h0_mode)


def fim_diagonal(per_grads, damping: float = 0.0) -> FimDiagonal:
    """Column mean of squared per-sample gradient entries, plus damping."""
    G = np.asarray(per_grads, dtype=FLOAT)
    if G.ndim != 2 or G.shape[0] == 0:
        raise DegenerateInputError("need a nonempty (b, d) gradient matrix")
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    diag = np.mean(G * G, axis=0) + damping
    return FimDiagonal(diag=require_finite(diag, "fim diagonal"), batch_size=G.shape[0])


def aggregate_fim(parts: Sequence[FimDiagonal]) -> FimDiagonal:
    """Unweighted mean of the diagonals over participants."""
    if not parts:
        raise DegenerateInputError("nothing to aggregate")
    dim = parts[0].diag.shape[0]
    for p in parts[1:]:
        if p.diag.shape[0] != dim:
            raise DimensionError(f"diagonal length mismatch: {p.diag.shape[0]} vs {dim}")
    diag = np.mean(np.stack([p.diag for p in parts]), axis=0)
    return FimDiagonal(diag=diag, batch_size=sum(p.batch_size for p in parts))


def smooth_y(fim: FimDiagonal, s: np.ndarray) -> np.ndarray:
    """Diagonal matrix-vector product D s producing the smoothed pair partner."""
    s = np.asarray(s, dtype=FLOAT)
    if s.shape != fim.diag.shape:
        raise DimensionError(f"step has shape {s.shape}, diagonal {fim.diag.shape}")
    return fim.diag * s


def curvature_ratio(pair: CurvaturePair) -> float:
    """||y||^2 / (y . s), the Rayleigh quotient of the smoothing matrix."""
    denom = float(pair.y @ pair.s)
    if denom <= 0:
        raise NumericError("curvature pair has non-positive y.s")
    return float(pair.y @ pair.y) / denom


def update_memory(mem: LbfgsMemory, s, y, cautious_eps: float = 1e-8) -> LbfgsMemory:
    """Append (s, y) iff y.s >= cautious_eps * ||s||^2; else count a skip.

    Oldest pair is discarded once the capacity is exceeded.  Skipping is not
    an error: it is what keeps every stored pair safely positive-curvature.
    """
    s = np.asarray(s, dtype=FLOAT)
    y = np.asarray(y, dtype=FLOAT)
    if s.shape != y.shape:
        raise DimensionError(f"s has shape {s.shape}, y has shape {y.shape}")
    sy = float(y @ s)
    if sy <= 0 or sy < cautious_eps * float(s @ s):
        return replace(mem, skips=mem.skips + 1)
    pair = CurvaturePair(s=s.copy(), y=y.copy(), rho=1.0 / sy)
    pairs = mem.pairs + (pair,)
    if len(pairs) > mem.capacity:
        pairs = pairs[-mem.capacity:]
    return replace(mem, pairs=pairs)


def two_loop_direction(mem: LbfgsMemory, g) -> np.ndarray:
    """Search direction -H g via the two-loop recursion.

    H is the inverse-Hessian approximation implied by the stored pairs on
    top of H0 = h0_scale * I; with an empty memory this is plain steepest
    descent.
    """
    g = np.asarray(g, dtype=FLOAT)
    for pair in mem.pairs:
        if pair.s.shape != g.shape:
            raise DimensionError(f"gradient has shape {g.shape}, pairs {pair.s.shape}")
    q = g.copy()
    alphas = []
    for pair in reversed(mem.pairs):
        a = pair.rho * float(pair.s @ q)
        q -= a * pair.y
        alphas.append(a)
    r = mem.h0_scale * q
    for pair, a in zip(mem.pairs, reversed(alphas)):
        b = pair.rho * float(pair.y @ r)
        r += (a - b) * pair.s
    return -r


def dense_bfgs_oracle(mem: LbfgsMemory, dim: int | None = None) -> np.ndarray:
    """Explicit inverse-Hessian matrix equivalent to the two-loop recursion.

    Applies the rank-two inverse update pair by pair, oldest first:
        H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
    Intended for test-scale dimensions only.
    """
    if mem.pairs:
        dim = mem.pairs[0].s.shape[0]
    elif dim is None:
        raise DimensionError("empty memory needs an explicit dim")
    eye = np.eye(dim, dtype=FLOAT)
    H = mem.h0_scale * eye
    for pair in mem.pairs:
        if float(pair.y @ pair.s) <= 0:
            raise NumericError("stored pair with non-positive curvature")
        V = eye - pair.rho * np.outer(pair.s, pair.y)
        H = V @ H @ V.T + pair.rho * np.outer(pair.s, pair.s)
    return H
