#!/usr/bin/env python3
"""Convergence-speed table on the convex benchmark (desk-scale analogue of
the optimizer-comparison experiment).

For each optimizer, reports the first round whose training loss reaches the
loss the plain averaging baseline attains at its final round, plus final
evaluation accuracy.  Quasi-Newton rounds should need far fewer rounds.
"""

import argparse
import os

import numpy as np

from fedfim.config import parse_config
from fedfim.harness import build_engine

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONVEX = os.path.join(ROOT, "configs", "convex.cfg")

VARIANTS = {
    "fedavg-sgd": [],
    "fedavg-adam": ["round.optimizer=fedavg-adam", "round.learning_rate=0.01"],
    "fim-lbfgs": ["round.optimizer=fim-lbfgs", "round.learning_rate=1.0",
                  "round.batch_size=50", "round.h0_mode=identity"],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = ap.parse_args()

    targets = {}
    for seed in args.seeds:
        cfg = parse_config(CONVEX, [f"seed={seed}"])
        targets[seed] = build_engine(cfg, seed).run()[-1].train_loss

    print(f"{'optimizer':<14} {'rounds-to-baseline-loss':>24} {'final accuracy':>15}")
    for name, overrides in VARIANTS.items():
        hits, accs = [], []
        for seed in args.seeds:
            cfg = parse_config(CONVEX, overrides + [f"seed={seed}"])
            reports = build_engine(cfg, seed).run()
            hit = next((r.round_index for r in reports
                        if r.train_loss <= targets[seed]), None)
            hits.append(hit if hit is not None else float("nan"))
            accs.append(np.mean([r.eval_accuracy for r in reports[-20:]]))
        print(f"{name:<14} {np.nanmean(hits):>24.1f} {np.mean(accs):>15.4f}")


if __name__ == "__main__":
    main()
