"""Dense float64 kernels, seeded randomness, and finite-difference helpers.

Everything here is pure: identical inputs give bit-identical outputs, and
random draws are fully determined by a (seed, stream_id) pair.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError

FLOAT = np.float64


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream_id).

    Streams with distinct ids are statistically independent, so per-client
    randomness does not depend on the order clients are visited.
    """
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be nonnegative")
    key = np.array([seed, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def require_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=FLOAT)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected nonempty 1-d vector, got shape {v.shape}")
    return v


def weighted_average(vectors: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Convex combination sum_k w_k v_k / sum_k w_k of same-length vectors."""
    vs = [as_vector(v) for v in vectors]
    if not vs:
        raise DegenerateInputError("weighted_average needs at least one vector")
    dim = vs[0].shape[0]
    for v in vs[1:]:
        if v.shape[0] != dim:
            raise DimensionError(f"vector length mismatch: {v.shape[0]} vs {dim}")
    w = np.asarray(weights, dtype=FLOAT)
    if w.ndim != 1 or w.shape[0] != len(vs):
        raise DimensionError(f"need one weight per vector, got {w.shape} for {len(vs)}")
    if np.any(w < 0):
        raise DegenerateInputError("weights must be nonnegative")
    total = float(w.sum())
    if total <= 0.0:
        raise DegenerateInputError("weights sum to zero")
    out = np.einsum("k,kd->d", w, np.stack(vs)) / total
    return require_finite(out, "weighted_average result")


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_vector(x)
    grad = np.empty_like(x)
    for j in range(x.size):
        probe = np.zeros_like(x)
        probe[j] = h
        hi = float(f(x + probe))
        lo = float(f(x - probe))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite function value while probing coordinate {j}")
        grad[j] = (hi - lo) / (2.0 * h)
    return grad


def rel_err(a, b) -> float:
    """|a-b| / max(1, |a|, |b|); arrays are compared by euclidean norm."""
    a = np.asarray(a, dtype=FLOAT)
    b = np.asarray(b, dtype=FLOAT)
    num = float(np.linalg.norm(a - b))
    return num / max(1.0, float(np.linalg.norm(a)), float(np.linalg.norm(b)))
