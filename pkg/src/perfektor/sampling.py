"""Randomness utilities: keyed generator streams and exact inverse-CDF tables.

All algorithmic draws consume one 53-bit uniform per random variable, in a
fixed documented order, so traces are reproducible from a seed.  Discrete
draws compare the integer numerator of the uniform against precomputed
integer cell boundaries ceil(cum * 2**53), which is exact at the resolution
of the uniform itself.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from fractions import Fraction
from typing import Sequence

import numpy as np

U53 = 1 << 53


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, *key); equal keys give identical streams."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def next_u53(rng: np.random.Generator) -> int:
    # Generator.random() returns m * 2**-53, so the scaling below is exact.
    return int(rng.random() * U53)


def exponential_from_u(u: int, rate: float) -> float:
    return -math.log1p(-u / U53) / rate


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class DiscreteSampler:
    """Inverse-CDF lookup for a finite distribution with exact boundaries.

    Zero-width cells are legal and never selected.
    """

    __slots__ = ("labels", "cuts")

    def __init__(self, labels: Sequence, weights: Sequence):
        ws = [w if isinstance(w, Fraction) else Fraction(w) for w in weights]
        if len(ws) != len(labels):
            raise ValueError("labels and weights must have equal length")
        if any(w < 0 for w in ws):
            raise ValueError("negative weight in distribution")
        if sum(ws) != 1:
            raise ValueError(f"weights must sum to exactly 1, got {float(sum(ws))}")
        cuts = []
        cum = Fraction(0)
        for w in ws:
            cuts.append(_ceil_div(cum.numerator << 53, cum.denominator))
            cum += w
        cuts.append(U53)
        self.labels = list(labels)
        self.cuts = cuts

    def sample(self, u: int):
        return self.labels[bisect_right(self.cuts, u) - 1]


_UNIFORM_CACHE: dict[int, DiscreteSampler] = {}


def uniform_index_sampler(n: int) -> DiscreteSampler:
    """Uniform sampler over indices 0..n-1 (cached; used for site selection)."""
    s = _UNIFORM_CACHE.get(n)
    if s is None:
        s = DiscreteSampler(range(n), [Fraction(1, n)] * n)
        _UNIFORM_CACHE[n] = s
    return s
