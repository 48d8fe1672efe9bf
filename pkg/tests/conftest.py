import numpy as np
import pytest

from fedfim.models import KINDS, ModelSpec, init_params


def random_instance(kind, rng, max_input=8, max_classes=6, max_hidden=6, batch=6,
                    kink_margin=1e-3):
    """Random (spec, params, X, y) with mlp pre-activations kept away from the
    relu kink so finite differences stay valid."""
    input_dim = int(rng.integers(2, max_input + 1))
    num_classes = 2 if kind == "binary-logistic" else int(rng.integers(2, max_classes + 1))
    hidden = int(rng.integers(2, max_hidden + 1)) if kind == "mlp1" else 0
    spec = ModelSpec(kind, input_dim, num_classes, hidden_dim=hidden)
    X = rng.standard_normal((batch, input_dim))
    y = rng.integers(0, num_classes, size=batch)
    for _ in range(200):
        params = init_params(spec, rng) + 0.1 * rng.standard_normal(spec.dim)
        if kind != "mlp1":
            return spec, params, X, y
        w1 = params[: hidden * input_dim].reshape(hidden, input_dim)
        if np.min(np.abs(X @ w1.T)) > kink_margin:
            return spec, params, X, y
    raise AssertionError("could not find a kink-free mlp instance")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_kinds():
    return list(KINDS)
