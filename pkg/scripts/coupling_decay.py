#!/usr/bin/env python3
"""Disagreement frequency of coupled runs against the decay envelope.

Writes one CSV row per horizon: empirical disagreement rate over the
replicates next to |F| e^(-eps t).
"""

import argparse
import csv
import math
import sys
from fractions import Fraction

from perfektor.coloring import constant_rule, coupling_experiment
from perfektor.rates import decay_rate, example_model, geometric_q
from perfektor.sampling import make_rng


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--t-grid", type=float, nargs="+", default=[0.5, 1, 2, 4, 8])
    ap.add_argument("--out", default="coupling_decay.csv")
    args = ap.parse_args(argv)

    model = example_model(1, geometric_q(Fraction(5, 8), Fraction(1, 2), Fraction(1, 4)),
                          Fraction(1, 2), 25)
    eps = decay_rate(model)
    sites = [(0,)]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "replicates", "disagreement_rate", "envelope"])
        for t in args.t_grid:
            dis = sum(
                coupling_experiment(model, constant_rule(0), constant_rule(1),
                                    sites, t, make_rng(args.seed, int(t * 1000), rep)).disagree
                for rep in range(args.replicates))
            rate = dis / args.replicates
            envelope = len(sites) * math.exp(-eps * t)
            writer.writerow([t, args.replicates, rate, envelope])
            print(f"t={t:6.2f}  rate={rate:.4f}  envelope={envelope:.4f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
