#!/usr/bin/env python3
"""Client-scaling table: accuracy vs client count at fixed total data.

The sample budget stays constant while K grows, so per-client data shrinks.
Participation is scaled as 20/K to keep the per-round participant count
fixed; otherwise growing K would also grow the per-round class coverage and
mask the fragmentation effect this table isolates.  The averaging baseline
loses accuracy as shards shrink while the one-vs-all ensemble holds up.
"""

import argparse
import os

import numpy as np

from fedfim.config import parse_config
from fedfim.harness import build_engine, final_accuracy

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
NONIID = os.path.join(ROOT, "configs", "noniid.cfg")


def mean_final(overrides, seeds):
    out = []
    for seed in seeds:
        cfg = parse_config(NONIID, overrides + [f"seed={seed}"])
        reports = build_engine(cfg, seed).run()
        out.append(final_accuracy([{"eval_accuracy": r.eval_accuracy} for r in reports]))
    return float(np.mean(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--clients", type=int, nargs="+", default=[20, 100, 200])
    ap.add_argument("--participants", type=int, default=20,
                    help="per-round participant count held fixed across K")
    args = ap.parse_args()

    header = " ".join(f"{'K=%d' % k:>10}" for k in args.clients)
    print(f"{'scheme':<8} {header}")
    for scheme in ("fedavg", "fedova"):
        cells = []
        for k in args.clients:
            q = min(1.0, args.participants / k)
            acc = mean_final(
                [f"scheme={scheme}", f"partition.clients={k}", f"round.participation={q}"],
                args.seeds,
            )
            cells.append(f"{acc:.4f}")
        print(f"{scheme:<8} " + " ".join(f"{c:>10}" for c in cells))


if __name__ == "__main__":
    main()
