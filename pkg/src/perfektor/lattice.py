"""Geometry of Z^d: sites, L1 balls, and transformations of finite site sets.

Sites are plain integer tuples so that sets of sites can live in hash sets;
the explored region of the lattice is unbounded and sparse, so nothing here
assumes a finite grid.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import comb
from typing import Iterable

Site = tuple[int, ...]


def l1_norm(v: Site) -> int:
    return sum(abs(x) for x in v)


def translate(site: Site, v: Site) -> Site:
    return tuple(a + b for a, b in zip(site, v))


def translate_set(sites: Iterable[Site], v: Site) -> frozenset[Site]:
    return frozenset(translate(s, v) for s in sites)


@lru_cache(maxsize=None)
def ball_offsets(d: int, k: int) -> tuple[Site, ...]:
    """Offsets v with ||v||_1 <= k in lexicographic order; empty for k = -1.

    The order is the canonical enumeration of a radius-k window: every color
    tuple exchanged between modules is indexed by this sequence.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if k < -1:
        raise ValueError(f"radius must be >= -1, got {k}")
    if k < 0:
        return ()
    rng = range(-k, k + 1)
    return tuple(sorted(v for v in product(rng, repeat=d) if l1_norm(v) <= k))


def l1_ball(center: Site, k: int) -> frozenset[Site]:
    """All sites within L1 distance k of the center; empty for k = -1."""
    return frozenset(translate(center, o) for o in ball_offsets(len(center), k))


def ball_volume(d: int, k: int) -> int:
    """|l1_ball(i, k)| for any center, via the closed combinatorial sum."""
    if k < -1:
        raise ValueError(f"radius must be >= -1, got {k}")
    if k < 0:
        return 0
    return sum((2 ** j) * comb(d, j) * comb(k, j) for j in range(min(d, k) + 1))


def pi_map(i: Site, k: int, sites: Iterable[Site]) -> frozenset[Site]:
    """Replace {i} by the radius-k ball around i; with k = -1 the site dies.

    Sets not containing i pass through unchanged.
    """
    members = frozenset(sites)
    if i not in members:
        return members
    rest = frozenset(s for s in members if s != i)
    if k < 0:
        return rest
    return rest | l1_ball(i, k)


def sorted_sites(sites: Iterable[Site]) -> list[Site]:
    """Deterministic (lexicographic) ordering used for all site draws."""
    return sorted(sites)
