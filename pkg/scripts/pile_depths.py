#!/usr/bin/env python3
"""Bit-consumption statistics of the bit-driven stationary sampler."""

import argparse
import sys
from fractions import Fraction

from perfektor.finitary import pile_statistics
from perfektor.rates import example_model, geometric_q


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--radius", type=int, default=25)
    args = ap.parse_args(argv)

    model = example_model(1, geometric_q(Fraction(5, 8), Fraction(1, 2), Fraction(1, 4)),
                          Fraction(1, 2), args.radius)
    stats = pile_statistics(model, [(0,)], args.replicates, args.seed)
    print(f"replicates                {stats.replicates}")
    print(f"mean bits per range draw  {stats.mean_k_bits:.3f}")
    print(f"entropy + 2 bound         {stats.entropy_bound:.3f}")
    print(f"sup_j mean bits at a site {stats.sup_site_mean:.3f}")
    print(f"suggested fixed pile size {stats.suggested_pile_count}")
    for k in sorted(stats.k_tail):
        print(f"P[N > {k:2d}] = {stats.k_tail[k]:.5f}  "
              f"(bound {stats.k_tail_bound[k]:.5f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
