"""Small differentiable classifiers with analytic per-sample gradients.

Three model families share one calling convention: parameters live in a
single flat float64 vector whose length is a pure function of the spec, so
optimizers and aggregation rules can treat every model uniformly.  None of
the models carry bias terms; a constant feature column can be added on
ingestion when an intercept is wanted.

  binary-logistic     sigmoid(x . w), w of length input_dim
  softmax-regression  softmax(W x),   W of shape (num_classes, input_dim)
  mlp1                softmax(W2 relu(W1 x)), one hidden layer
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numerics import FLOAT

KINDS = ("binary-logistic", "softmax-regression", "mlp1")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int = 2
    hidden_dim: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {KINDS}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind == "binary-logistic" and self.num_classes != 2:
            raise ValueError("binary-logistic is a two-class model")
        if self.kind == "mlp1":
            if self.hidden_dim < 1:
                raise ValueError("mlp1 needs hidden_dim >= 1")
            if self.activation != "relu":
                raise ValueError("only relu activation is supported")

    @property
    def dim(self) -> int:
        """Flat parameter count."""
        if self.kind == "binary-logistic":
            return self.input_dim
        if self.kind == "softmax-regression":
            return self.input_dim * self.num_classes
        return self.hidden_dim * self.input_dim + self.num_classes * self.hidden_dim


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per weight block."""
    if spec.kind == "mlp1":
        b1 = 1.0 / np.sqrt(spec.input_dim)
        b2 = 1.0 / np.sqrt(spec.hidden_dim)
        w1 = rng.uniform(-b1, b1, size=spec.hidden_dim * spec.input_dim)
        w2 = rng.uniform(-b2, b2, size=spec.num_classes * spec.hidden_dim)
        return np.concatenate([w1, w2]).astype(FLOAT)
    bound = 1.0 / np.sqrt(spec.input_dim)
    return rng.uniform(-bound, bound, size=spec.dim).astype(FLOAT)


def _check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=FLOAT)
    if params.shape != (spec.dim,):
        raise DimensionError(f"parameter vector has shape {params.shape}, spec wants ({spec.dim},)")
    return params


def _check_batch(spec: ModelSpec, features, labels=None):
    X = np.asarray(features, dtype=FLOAT)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(f"features have shape {X.shape}, spec wants (b, {spec.input_dim})")
    if X.shape[0] < 1:
        raise DimensionError("batch must hold at least one sample")
    if labels is None:
        return X, None
    y = np.asarray(labels)
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{X.shape[0]} feature rows but {y.shape} labels")
    if y.size and (y.min() < 0 or y.max() >= spec.num_classes):
        raise DimensionError(f"labels must lie in [0, {spec.num_classes})")
    return X, y.astype(np.int64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(Z: np.ndarray) -> np.ndarray:
    e = np.exp(Z - Z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _logsumexp(Z: np.ndarray) -> np.ndarray:
    zmax = Z.max(axis=1)
    return zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))


def _mlp_unpack(spec: ModelSpec, params: np.ndarray):
    cut = spec.hidden_dim * spec.input_dim
    w1 = params[:cut].reshape(spec.hidden_dim, spec.input_dim)
    w2 = params[cut:].reshape(spec.num_classes, spec.hidden_dim)
    return w1, w2


def _logits(spec: ModelSpec, params: np.ndarray, X: np.ndarray):
    """Class logits plus whatever intermediates the backward pass needs."""
    if spec.kind == "binary-logistic":
        return X @ params, None
    if spec.kind == "softmax-regression":
        W = params.reshape(spec.num_classes, spec.input_dim)
        return X @ W.T, None
    w1, w2 = _mlp_unpack(spec, params)
    pre = X @ w1.T
    hidden = np.maximum(pre, 0.0)
    return hidden @ w2.T, (pre, hidden, w2)


def forward_loss(spec: ModelSpec, params, features, labels) -> float:
    """Mean negative log-likelihood over the batch (log-sum-exp stabilized)."""
    params = _check_params(spec, params)
    X, y = _check_batch(spec, features, labels)
    if spec.kind == "binary-logistic":
        z, _ = _logits(spec, params, X)
        return float(np.mean(np.logaddexp(0.0, z) - y * z))
    Z, _ = _logits(spec, params, X)
    return float(np.mean(_logsumexp(Z) - Z[np.arange(len(y)), y]))


def per_sample_gradients(spec: ModelSpec, params, features, labels) -> np.ndarray:
    """Row i is the gradient of sample i's (un-averaged) loss; shape (b, dim)."""
    params = _check_params(spec, params)
    X, y = _check_batch(spec, features, labels)
    b = X.shape[0]
    if spec.kind == "binary-logistic":
        z, _ = _logits(spec, params, X)
        return (_sigmoid(z) - y)[:, None] * X
    Z, extra = _logits(spec, params, X)
    resid = _softmax(Z)
    resid[np.arange(b), y] -= 1.0
    if spec.kind == "softmax-regression":
        return np.einsum("bm,bd->bmd", resid, X).reshape(b, -1)
    pre, hidden, w2 = extra
    g2 = np.einsum("bm,bh->bmh", resid, hidden)
    delta1 = (resid @ w2) * (pre > 0.0)  # relu subgradient at 0 is 0
    g1 = np.einsum("bh,bd->bhd", delta1, X)
    return np.concatenate([g1.reshape(b, -1), g2.reshape(b, -1)], axis=1)


def batch_gradient(spec: ModelSpec, params, features, labels) -> np.ndarray:
    """Gradient of the mean loss; always equals the per-sample row mean."""
    params = _check_params(spec, params)
    X, y = _check_batch(spec, features, labels)
    b = X.shape[0]
    if spec.kind == "binary-logistic":
        z, _ = _logits(spec, params, X)
        return X.T @ (_sigmoid(z) - y) / b
    Z, extra = _logits(spec, params, X)
    resid = _softmax(Z)
    resid[np.arange(b), y] -= 1.0
    if spec.kind == "softmax-regression":
        return (resid.T @ X).reshape(-1) / b
    pre, hidden, w2 = extra
    g2 = resid.T @ hidden
    delta1 = (resid @ w2) * (pre > 0.0)
    g1 = delta1.T @ X
    return np.concatenate([g1.reshape(-1), g2.reshape(-1)]) / b


def predict_proba(spec: ModelSpec, params, features) -> np.ndarray:
    """Per-row class distribution of shape (b, num_classes)."""
    params = _check_params(spec, params)
    X, _ = _check_batch(spec, features)
    if spec.kind == "binary-logistic":
        p1 = _sigmoid(X @ params)
        return np.column_stack([1.0 - p1, p1])
    Z, _ = _logits(spec, params, X)
    return _softmax(Z)


def predict(spec: ModelSpec, params, features) -> np.ndarray:
    return predict_proba(spec, params, features).argmax(axis=1)


def accuracy(spec: ModelSpec, params, features, labels) -> float:
    _, y = _check_batch(spec, features, labels)
    return float(np.mean(predict(spec, params, features) == y))
