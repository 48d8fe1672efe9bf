#!/usr/bin/env python3
"""Regenerate the frozen convex-benchmark loss trajectory used by the tests.

Run from the repository root after any intentional change to the optimizer
numerics, then inspect the diff before committing.
"""

import json
import os

from fedfim.config import parse_config
from fedfim.harness import build_engine

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)

OVERRIDES = [
    "round.optimizer=fim-lbfgs",
    "round.learning_rate=1.0",
    "round.batch_size=2000",
    "round.h0_mode=identity",
    "round.total_rounds=25",
    "seed=1",
]


def main():
    cfg = parse_config(os.path.join(ROOT, "configs", "convex.cfg"), OVERRIDES)
    engine = build_engine(cfg, seed=1)
    reports = engine.run()
    payload = {
        "base_config": "configs/convex.cfg",
        "overrides": OVERRIDES,
        "seed": 1,
        "train_loss": [r.train_loss for r in reports],
        "eval_accuracy": [r.eval_accuracy for r in reports],
    }
    out_dir = os.path.join(ROOT, "tests", "golden")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "convex_loss_trajectory.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    print(f"wrote {path} ({len(reports)} rounds, final loss {payload['train_loss'][-1]:.6f})")


if __name__ == "__main__":
    main()
