"""Coding the exact sampler as a function of seeded fair bits.

A BitField is a deterministic, random-access array of i.i.d. fair bits
indexed by (site, variable class, pile, depth).  Discrete draws refine the
dyadic interval [S_m, S_m + 2^-m) bit by bit until it fits inside a single
cell of the target partition of [0, 1); the number of bits consumed is a
stopping time and costs at most entropy + 2 bits on average.

Running the terminating sketch and its forward coloring with every draw
funded by the piles of fair bits realizes the stationary sample at a finite
set of sites as a function of finitely many bits: the footprint (sites,
piles, depths actually read) is recorded so the finite-dependence property
can be tested by mutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

from .lattice import Site, ball_offsets, l1_ball, sorted_sites, translate, translate_set
from .rates import FiniteRangeLaw, ModelError, RateModel, parse_number
from .sketch import DEFAULT_STEP_BUDGET, SketchRecord, StepBudgetExceeded

CLASS_I, CLASS_K, CLASS_W = 0, 1, 2
CLASS_NAMES = {CLASS_I: "I", CLASS_K: "K", CLASS_W: "W"}

_MASK64 = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(x: int) -> int:
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


class BitField:
    """Counter-based keyed bit source: pure, order-independent, platform-stable."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._base = _mix64(self.seed ^ _GOLD)

    def bit(self, site: Site, cls: int, pile: int, depth: int) -> int:
        h = self._base
        h = _mix64(h ^ ((cls + 1) * _GOLD) & _MASK64)
        h = _mix64(h ^ (pile * _MIX1) & _MASK64)
        h = _mix64(h ^ (depth * _MIX2) & _MASK64)
        for c in site:
            h = _mix64(h ^ ((c & _MASK64) * _GOLD) & _MASK64)
        return h >> 63

    def shifted(self, v: Site) -> "ShiftedBitField":
        return ShiftedBitField(self, v)


class ShiftedBitField:
    """Lattice translation of a bit field: reads site - v of the base field."""

    def __init__(self, base, v: Site):
        self.base = base
        self.v = tuple(v)

    def bit(self, site: Site, cls: int, pile: int, depth: int) -> int:
        moved = tuple(c - w for c, w in zip(site, self.v))
        return self.base.bit(moved, cls, pile, depth)

    def shifted(self, v: Site) -> "ShiftedBitField":
        return ShiftedBitField(self, v)


class OverlayBitField:
    """Base field with a set of flipped indices (site, cls, pile, depth)."""

    def __init__(self, base, flips: Iterable[tuple]):
        self.base = base
        self.flips = frozenset(flips)

    def bit(self, site: Site, cls: int, pile: int, depth: int) -> int:
        b = self.base.bit(site, cls, pile, depth)
        if (site, cls, pile, depth) in self.flips:
            b ^= 1
        return b

    def shifted(self, v: Site):
        raise NotImplementedError("overlay fields are test fixtures; shift the base")


# ---------------------------------------------------------------------------
# Partitions and the interval-refinement sampler
# ---------------------------------------------------------------------------


class DepthBudgetExceeded(RuntimeError):
    """The dyadic interval still straddles a threshold at the depth cap."""


class Partition:
    """Half-open cells [theta(l), theta(l+1)) of [0, 1) with exact thresholds.

    Cell widths are the outcome probabilities, in declared outcome order;
    zero-width cells are allowed and never selected.  Cells may be supplied
    lazily by a generator, for laws with infinite support whose cumulative
    masses are computable termwise.
    """

    def __init__(self, cells: Iterable[tuple] | Iterator[tuple], lazy: bool = False):
        self._labels: list = []
        self._nums: list[int] = [0]   # thresholds as exact fractions num/den
        self._dens: list[int] = [1]
        self._cum = Fraction(0)
        self._finite = not lazy
        if lazy:
            self._source: Iterator[tuple] | None = iter(cells)
        else:
            self._source = None
            for label, w in cells:
                self._push(label, parse_number(w))
            if self._cum != 1:
                raise ModelError("partition cell widths must sum to exactly 1")

    def _push(self, label, width: Fraction):
        if width < 0:
            raise ModelError("negative cell width")
        self._labels.append(label)
        self._cum += width
        if self._cum > 1:
            raise ModelError("partition cell widths exceed 1")
        self._nums.append(self._cum.numerator)
        self._dens.append(self._cum.denominator)

    @classmethod
    def from_probs(cls, labels: Sequence, weights: Sequence) -> "Partition":
        return cls(list(zip(labels, weights)))

    @classmethod
    def from_law(cls, law) -> "Partition":
        """Cells in range order -1, 0, 1, ... (the declared outcome order)."""
        if isinstance(law, FiniteRangeLaw):
            return cls([(k, p) for k, p in law.items()])

        def gen():
            k = -1
            while True:
                yield k, law.pmf(k)
                k += 1

        return cls(gen(), lazy=True)

    @classmethod
    def uniform(cls, labels: Sequence) -> "Partition":
        n = len(labels)
        return cls([(lab, Fraction(1, n)) for lab in labels])

    # -- threshold arithmetic (theta_i vs num / 2**m) -------------------------

    def _materialize_next(self) -> bool:
        if self._source is None:
            return False
        try:
            label, w = next(self._source)
        except StopIteration:
            self._source = None
            self._finite = True
            if self._cum != 1:
                raise ModelError("lazy partition ended before covering [0, 1)")
            return False
        self._push(label, parse_number(w))
        return True

    def _n_thresholds(self) -> int:
        return len(self._nums)

    def _thr_le(self, i: int, num: int, m: int) -> bool:
        """theta_i <= num / 2**m, exactly."""
        return self._nums[i] << m <= num * self._dens[i]

    def _thr_ge(self, i: int, num: int, m: int) -> bool:
        return self._nums[i] << m >= num * self._dens[i]

    def cell_index_containing(self, num: int, m: int, start: int = 0) -> int:
        """Largest l with theta_l <= num / 2**m (requires num < 2**m)."""
        l = start
        while True:
            while l + 1 >= self._n_thresholds() and not self._finite:
                self._materialize_next()
            if l + 1 >= self._n_thresholds():
                return l
            if self._thr_le(l + 1, num, m):
                l += 1
            else:
                return l

    def interval_fits(self, l: int, num: int, m: int) -> bool:
        """[num/2**m, (num+1)/2**m) inside cell l, i.e. theta_{l+1} >= end."""
        while l + 1 >= self._n_thresholds() and not self._finite:
            self._materialize_next()
        if l + 1 >= self._n_thresholds():
            # top cell of a finite partition: theta = 1 and end <= 1 always
            return True
        return self._thr_ge(l + 1, num + 1, m)

    def label(self, l: int):
        return self._labels[l]

    def cell_of_fraction(self, x) -> tuple:
        """(label, index) of the cell containing an exact point of [0, 1)."""
        x = parse_number(x)
        if not 0 <= x < 1:
            raise ValueError("point outside [0, 1)")
        l = 0
        while True:
            while l + 1 >= self._n_thresholds() and not self._finite:
                self._materialize_next()
            if l + 1 >= self._n_thresholds():
                return self._labels[l], l
            if Fraction(self._nums[l + 1], self._dens[l + 1]) <= x:
                l += 1
            else:
                return self._labels[l], l

    def width(self, l: int) -> Fraction:
        return (Fraction(self._nums[l + 1], self._dens[l + 1])
                - Fraction(self._nums[l], self._dens[l]))

    def straddle_count(self, k_bits: int) -> int:
        """m_k = number of thresholds theta_i < 1 - 2**-k (indices from 1)."""
        target_num, target_m = (1 << k_bits) - 1, k_bits
        count = 0
        i = 0
        while True:
            while i >= self._n_thresholds() and not self._finite:
                self._materialize_next()
            if i >= self._n_thresholds():
                return count
            if self._nums[i] << target_m < target_num * self._dens[i]:
                count += 1
                i += 1
                continue
            return count


def knuth_yao_sample(partition: Partition, bits: Callable[[int], int],
                     max_depth: int = 64) -> tuple:
    """Draw one outcome from fair bits by dyadic interval refinement.

    ``bits(r)`` must return the r-th bit (r = 1, 2, ...); the decision to
    read bit r+1 depends only on bits 1..r.  At least one bit is always
    consumed.  Raises DepthBudgetExceeded instead of ever returning an
    outcome the read bits do not determine.
    """
    num = 0
    cell = 0
    for m in range(1, max_depth + 1):
        num = (num << 1) | (1 if bits(m) else 0)
        cell = partition.cell_index_containing(num, m, start=cell)
        if partition.interval_fits(cell, num, m):
            return partition.label(cell), m
    raise DepthBudgetExceeded(
        f"draw unresolved after {max_depth} bits; either raise the depth cap "
        f"or check the partition for pathologically close thresholds")


# ---------------------------------------------------------------------------
# Bit-driven sampling of the invariant measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinitaryReport:
    """Outcome and bit footprint of one bit-driven stationary draw."""

    colors: dict[Site, int]
    window: frozenset[Site]              # sites whose piles were read
    max_pile: int
    max_bit_depth: int
    bits_total: int
    bits_by_class: dict[int, int]
    draws_by_class: dict[int, int]
    bits_by_site: dict[Site, int]
    k_draw_bits: tuple[int, ...]
    n_stop: int
    reads: frozenset[tuple] | None       # exact (site, cls, pile, depth) set

    @property
    def pile_bound(self) -> int:
        """A single bound n with all reads at piles <= n and depths <= n."""
        return max(self.max_pile, self.max_bit_depth, 1)


def _partition_cache(model: RateModel) -> dict:
    cache = getattr(model, "_finitary_partitions", None)
    if cache is None:
        cache = {}
        model._finitary_partitions = cache
    return cache


def _k_partition(model: RateModel) -> Partition:
    cache = _partition_cache(model)
    part = cache.get("K")
    if part is None:
        part = Partition.from_law(model.law(model.origin))
        cache["K"] = part
    return part


def _site_partition(model: RateModel, ordered: Sequence[Site]) -> Partition:
    ms = [model.m_at(s) for s in ordered]
    if len(set(ms)) == 1:
        cache = _partition_cache(model)
        key = ("I", len(ordered))
        part = cache.get(key)
        if part is None:
            part = Partition.uniform(range(len(ordered)))
            cache[key] = part
        return part
    total = sum(ms, Fraction(0))
    return Partition.from_probs(range(len(ordered)), [m / total for m in ms])


def _w_partition(model: RateModel, site: Site, k: int, window: tuple[int, ...]) -> Partition:
    dist = model.kernel_dist(site, k, window)
    cache = _partition_cache(model)
    part = cache.get(dist)
    if part is None:
        part = Partition.from_probs(range(model.n_colors), dist)
        cache[dist] = part
    return part


def finitary_sample(model: RateModel, sites: Iterable[Site], field,
                    step_budget: int = DEFAULT_STEP_BUDGET, max_depth: int = 64,
                    track_reads: bool = True) -> FinitaryReport:
    """Stationary draw on the given sites as a function of the bit field.

    Pile addressing: range draws read class-K piles at the updated site and
    color draws read class-W piles at the recolored site; the site-selection
    draw reads a class-I pile at the lexicographically smallest support
    member, and is skipped entirely (no bits, no pile) when the support is a
    singleton since there is no choice to make.  Pile indices count actual
    reads per (site, class).
    """
    model.require_condition(strict=True)
    sites = frozenset(sites)
    counters: dict[tuple[Site, int], int] = {}
    reads: set[tuple] | None = set() if track_reads else None
    bits_by_class = {CLASS_I: 0, CLASS_K: 0, CLASS_W: 0}
    draws_by_class = {CLASS_I: 0, CLASS_K: 0, CLASS_W: 0}
    bits_by_site: dict[Site, int] = {}
    k_draw_bits: list[int] = []
    state = {"max_pile": 0, "max_depth": 0}

    def draw(partition: Partition, fund_site: Site, cls: int):
        pile = counters.get((fund_site, cls), 0) + 1
        counters[(fund_site, cls)] = pile
        if pile > state["max_pile"]:
            state["max_pile"] = pile

        def bit_at(r: int) -> int:
            if reads is not None:
                reads.add((fund_site, cls, pile, r))
            return field.bit(fund_site, cls, pile, r)

        label, used = knuth_yao_sample(partition, bit_at, max_depth)
        bits_by_class[cls] += used
        draws_by_class[cls] += 1
        bits_by_site[fund_site] = bits_by_site.get(fund_site, 0) + used
        if used > state["max_depth"]:
            state["max_depth"] = used
        if cls == CLASS_K:
            k_draw_bits.append(used)
        return label

    # Backward phase: terminating sketch driven by piles.
    current = set(sites)
    records: list[SketchRecord] = []
    while current:
        if len(records) >= step_budget:
            raise StepBudgetExceeded(f"bit-driven sketch exceeded {step_budget} events")
        ordered = sorted_sites(current)
        if len(ordered) == 1:
            i_site = ordered[0]
        else:
            idx = draw(_site_partition(model, ordered), ordered[0], CLASS_I)
            i_site = ordered[idx]
        k = draw(_k_partition(model), i_site, CLASS_K)
        if k == -1:
            current.discard(i_site)
        else:
            current |= l1_ball(i_site, k)
        records.append(SketchRecord(i_site, k))

    # Forward phase: coloring driven by piles.
    config: dict[Site, int] = {}
    for idx in range(len(records) - 1, -1, -1):
        rec = records[idx]
        if rec.k == -1:
            window: tuple[int, ...] = ()
        else:
            window = tuple(config[translate(rec.site, off)]
                           for off in ball_offsets(model.d, rec.k))
        w = draw(_w_partition(model, rec.site, rec.k, window), rec.site, CLASS_W)
        config[rec.site] = w

    return FinitaryReport(
        colors={s: config[s] for s in sites},
        window=frozenset(bits_by_site),
        max_pile=state["max_pile"],
        max_bit_depth=state["max_depth"],
        bits_total=sum(bits_by_class.values()),
        bits_by_class=bits_by_class,
        draws_by_class=draws_by_class,
        bits_by_site=bits_by_site,
        k_draw_bits=tuple(k_draw_bits),
        n_stop=len(records),
        reads=frozenset(reads) if reads is not None else None,
    )


def equivariance_check(model: RateModel, sites: Iterable[Site], field,
                       shift: Site) -> bool:
    """Shifting both the target sites and the bit field must shift the output."""
    base = finitary_sample(model, sites, field, track_reads=False)
    moved = finitary_sample(model, translate_set(sites, shift), field.shifted(shift),
                            track_reads=False)
    expected = {translate(s, shift): c for s, c in base.colors.items()}
    return moved.colors == expected


# ---------------------------------------------------------------------------
# Bit-consumption statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PileStatistics:
    replicates: int
    mean_bits_per_class_draw: dict[int, float]
    mean_k_bits: float
    entropy_bound: float
    mean_total_per_site: float
    sup_site_mean: float
    suggested_pile_count: int
    k_tail: dict[int, float]
    k_tail_bound: dict[int, float]

    def rows(self):
        for cls in (CLASS_I, CLASS_K, CLASS_W):
            yield (CLASS_NAMES[cls], self.mean_bits_per_class_draw.get(cls, float("nan")))


def pile_statistics(model: RateModel, sites: Iterable[Site], replicates: int,
                    seed: int, tail_ks: Sequence[int] = (4, 8, 12)) -> PileStatistics:
    """Monte Carlo bit-consumption summary over independent bit fields.

    Checks material: the mean bits per range draw against entropy + 2, the
    per-depth tail against (m_k + 1) / 2^(k-1), and the smallest integer
    pile count exceeding the largest per-site mean total (the constant a
    fixed-alphabet recoding of the piles would use).
    """
    sites = frozenset(sites)
    draws_by_class = {CLASS_I: 0, CLASS_K: 0, CLASS_W: 0}
    bits_by_class = {CLASS_I: 0, CLASS_K: 0, CLASS_W: 0}
    site_totals: dict[Site, float] = {}
    k_bits_all: list[int] = []
    for rep in range(replicates):
        fld = BitField(_mix64(seed + rep * _GOLD))
        rep_report = finitary_sample(model, sites, fld, track_reads=False)
        for cls, total in rep_report.bits_by_class.items():
            bits_by_class[cls] += total
        for cls, total in rep_report.draws_by_class.items():
            draws_by_class[cls] += total
        k_bits_all.extend(rep_report.k_draw_bits)
        for s, b in rep_report.bits_by_site.items():
            site_totals[s] = site_totals.get(s, 0.0) + b
    # site-selection draws are skipped for singleton supports, so the I-mean
    # averages only over performed draws
    mean_per_draw = {cls: (bits_by_class[cls] / draws_by_class[cls]
                           if draws_by_class[cls] else 0.0)
                     for cls in (CLASS_I, CLASS_K, CLASS_W)}
    mean_k = (sum(k_bits_all) / len(k_bits_all)) if k_bits_all else 0.0
    site_means = {s: total / replicates for s, total in site_totals.items()}
    sup_mean = max(site_means.values()) if site_means else 0.0
    part = _k_partition(model)
    tail = {}
    tail_bound = {}
    for kb in tail_ks:
        tail[kb] = sum(1 for b in k_bits_all if b > kb) / max(len(k_bits_all), 1)
        tail_bound[kb] = (part.straddle_count(kb) + 1) / 2 ** (kb - 1)
    return PileStatistics(
        replicates=replicates,
        mean_bits_per_class_draw=mean_per_draw,
        mean_k_bits=mean_k,
        entropy_bound=model.law(model.origin).entropy_bits() + 2.0,
        mean_total_per_site=(sum(site_means.values()) / len(site_means)) if site_means else 0.0,
        sup_site_mean=sup_mean,
        suggested_pile_count=int(math.floor(sup_mean)) + 1,
        k_tail=tail,
        k_tail_bound=tail_bound,
    )
