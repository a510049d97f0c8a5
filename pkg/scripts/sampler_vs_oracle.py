#!/usr/bin/env python3
"""Two-sample comparison between the exact sampler and a torus long run."""

import argparse
import sys
from collections import Counter
from fractions import Fraction

from perfektor.coloring import perfect_sample
from perfektor.harness import compare_distributions, torus_long_run
from perfektor.rates import example_model, geometric_q, heat_bath_model, ising_heat_bath_spec
from perfektor.sampling import make_rng


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=("example1", "heat_bath"), default="example1")
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--sites", type=int, default=2, help="cylinder size |F|")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--box", type=int, default=64)
    ap.add_argument("--burn-in", type=float, default=500.0)
    ap.add_argument("--thinning", type=float, default=8.0)
    args = ap.parse_args(argv)

    if args.model == "example1":
        model = example_model(1, geometric_q(Fraction(5, 8), Fraction(1, 2),
                                             Fraction(1, 4)), Fraction(1, 2), 25)
    else:
        model = heat_bath_model(ising_heat_bath_spec(0.1, d=1))
    sites = [(i,) for i in range(args.sites)]

    oracle = torus_long_run(model, args.box, args.burn_in, args.samples,
                            args.thinning, make_rng(args.seed, 0), [sites])[0]
    exact = Counter()
    for rep in range(args.samples):
        sample = perfect_sample(model, sites, make_rng(args.seed, 1, rep))
        exact[tuple(sample[s] for s in sites)] += 1

    report = compare_distributions(exact, oracle)
    print(f"model={args.model}  |F|={args.sites}  n={args.samples} per side")
    print(f"chi2 = {report.statistic:.2f} (df {report.df}), p = {report.p_value:.4f}")
    print(f"TV distance = {report.tv_distance:.5f} (radius {report.tv_radius:.5f})")
    return 0 if report.p_value > 0.01 else 1


if __name__ == "__main__":
    sys.exit(main())
