"""Reverse-time support exploration ("black and white sketches").

Starting from a finite target set F, the sketch walks backwards through the
update events that could influence F: each step picks a site I from the
current support C (probability proportional to M_I), draws a range K from
I's range law, and either expands C by the radius-K ball or, in the
with-deaths variants, removes I when K = -1.

Randomness contract: every random variable consumes exactly one 53-bit
uniform from the generator, in the order (T, I, K) per step for the timed
variants and (I, K) for the untimed one.  The site draw iterates the support
in lexicographic order, so traces are bit-reproducible from the seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .lattice import Site, l1_ball, pi_map, sorted_sites
from .rates import RateModel, decay_rate, growth_rate
from .sampling import DiscreteSampler, exponential_from_u, next_u53, uniform_index_sampler

DEFAULT_STEP_BUDGET = 10_000_000


class StepBudgetExceeded(RuntimeError):
    """The sketch did not terminate within the configured number of events."""


@dataclass(frozen=True)
class SketchRecord:
    site: Site
    k: int
    t: float | None = None


@dataclass(frozen=True)
class SketchTrace:
    """Record array plus final support of one backward exploration.

    For timed traces ``died`` means the support emptied strictly before the
    horizon; a support that empties only at the record overshooting the
    horizon counts as having reached it.  Untimed terminating traces always
    have ``died`` set and an empty support.
    """

    sites: frozenset[Site]
    records: tuple[SketchRecord, ...]
    support: frozenset[Site]
    horizon: float | None
    t_stop: float | None
    died: bool

    @property
    def n_stop(self) -> int:
        return len(self.records)


def _site_sampler(model: RateModel, ordered: Sequence[Site]):
    ms = [model.m_at(s) for s in ordered]
    if len(set(ms)) == 1:
        return uniform_index_sampler(len(ordered))
    total = sum(ms, Fraction(0))
    return DiscreteSampler(range(len(ordered)), [m / total for m in ms])


def _total_rate(model: RateModel, sites) -> float:
    return float(sum((model.m_at(s) for s in sites), Fraction(0)))


def backward_sketch_no_deaths(model: RateModel, sites: Iterable[Site], horizon: float,
                              rng: np.random.Generator,
                              step_budget: int = DEFAULT_STEP_BUDGET) -> SketchTrace:
    """Timed backward sketch that never removes sites.

    Runs until the accumulated backward time reaches the horizon (or the
    support empties, which cannot happen from a nonempty start).  The final
    record overshoots the horizon and is retained; consumers that only care
    about events inside the window must clip on the record times.
    """
    model.require_condition(strict=False)
    sites = frozenset(sites)
    current = set(sites)
    records: list[SketchRecord] = []
    t_stop = 0.0
    while t_stop < horizon and current:
        if len(records) >= step_budget:
            raise StepBudgetExceeded(
                f"no-deaths sketch exceeded {step_budget} events before the horizon")
        ordered = sorted_sites(current)
        t_stop += exponential_from_u(next_u53(rng), _total_rate(model, ordered))
        i_site = ordered[_site_sampler(model, ordered).sample(next_u53(rng))]
        k = model.law(i_site).sampler().sample(next_u53(rng))
        if k >= 0:
            current |= l1_ball(i_site, k)
        records.append(SketchRecord(i_site, k, t_stop))
    died = not current and t_stop < horizon
    return SketchTrace(sites, tuple(records), frozenset(current), horizon,
                       t_stop, died)


def backward_sketch(model: RateModel, sites: Iterable[Site],
                    rng: np.random.Generator,
                    step_budget: int = DEFAULT_STEP_BUDGET) -> SketchTrace:
    """Untimed backward sketch with deaths; terminates when the support empties.

    Termination is almost sure under the strict summability condition; the
    step budget turns a violated precondition into a loud failure instead of
    an endless loop.
    """
    model.require_condition(strict=True)
    sites = frozenset(sites)
    current = set(sites)
    records: list[SketchRecord] = []
    while current:
        if len(records) >= step_budget:
            raise StepBudgetExceeded(
                f"terminating sketch exceeded {step_budget} events")
        ordered = sorted_sites(current)
        i_site = ordered[_site_sampler(model, ordered).sample(next_u53(rng))]
        k = model.law(i_site).sampler().sample(next_u53(rng))
        if k == -1:
            current.discard(i_site)
        else:
            current |= l1_ball(i_site, k)
        records.append(SketchRecord(i_site, k))
    return SketchTrace(sites, tuple(records), frozenset(), None, None, True)


def backward_sketch_coupling(model: RateModel, sites: Iterable[Site], horizon: float,
                             rng: np.random.Generator,
                             step_budget: int = DEFAULT_STEP_BUDGET) -> SketchTrace:
    """Timed backward sketch with deaths (the coupling construction).

    Stops at the horizon or when the support dies out, whichever comes first;
    ``died`` distinguishes the two outcomes.
    """
    model.require_condition(strict=False)
    sites = frozenset(sites)
    current = set(sites)
    records: list[SketchRecord] = []
    t_stop = 0.0
    while t_stop < horizon and current:
        if len(records) >= step_budget:
            raise StepBudgetExceeded(
                f"coupling sketch exceeded {step_budget} events before the horizon")
        ordered = sorted_sites(current)
        t_stop += exponential_from_u(next_u53(rng), _total_rate(model, ordered))
        i_site = ordered[_site_sampler(model, ordered).sample(next_u53(rng))]
        k = model.law(i_site).sampler().sample(next_u53(rng))
        if k == -1:
            current.discard(i_site)
        else:
            current |= l1_ball(i_site, k)
        records.append(SketchRecord(i_site, k, t_stop))
    died = not current and t_stop < horizon
    return SketchTrace(sites, tuple(records), frozenset(current), horizon,
                       t_stop, died)


# ---------------------------------------------------------------------------
# Replay helpers
# ---------------------------------------------------------------------------


def replay_support(sites: Iterable[Site], records: Sequence[SketchRecord],
                   deaths: bool) -> list[frozenset[Site]]:
    """Support sets after each record, starting from the input set.

    Raises if any record names a site outside the support it acted on; that
    would mean the trace and the input set do not belong together.
    """
    current = frozenset(sites)
    out = [current]
    for rec in records:
        if rec.site not in current:
            raise ValueError(f"record site {rec.site} not in support {set(current)}")
        if deaths:
            current = pi_map(rec.site, rec.k, current)
        elif rec.k >= 0:
            current = current | l1_ball(rec.site, rec.k)
        out.append(current)
    return out


def support_at(trace: SketchTrace, s: float, deaths: bool) -> frozenset[Site]:
    """Support at backward time s, replaying records with t <= s."""
    current = frozenset(trace.sites)
    for rec in trace.records:
        if rec.t is None or rec.t > s:
            break
        if deaths:
            current = pi_map(rec.site, rec.k, current)
        elif rec.k >= 0:
            current = current | l1_ball(rec.site, rec.k)
    return current


# ---------------------------------------------------------------------------
# Continuous-time reverse process (independent oracle)
# ---------------------------------------------------------------------------


class ReverseMarkedPoisson:
    """Per-site reverse event stream: exponential gaps, range-law marks.

    Streams are generated lazily backward from the reference time; a site
    that leaves and re-enters the support gets a fresh stream, which has the
    same law by memorylessness.
    """

    def __init__(self, site: Site, rate: float, law_sampler: DiscreteSampler,
                 rng: np.random.Generator):
        self.site = site
        self._rate = rate
        self._law = law_sampler
        self._rng = rng

    def next_time(self, now: float) -> float:
        return now + exponential_from_u(next_u53(self._rng), self._rate)

    def draw_mark(self) -> int:
        return self._law.sample(next_u53(self._rng))


@dataclass(frozen=True)
class ReversePath:
    initial: frozenset[Site]
    horizon: float
    events: tuple[tuple[float, Site, int], ...]
    deaths: bool

    @property
    def embedded(self) -> tuple[tuple[Site, int], ...]:
        return tuple((s, k) for _, s, k in self.events)

    def support_at(self, s: float) -> frozenset[Site]:
        current = frozenset(self.initial)
        for t, site, k in self.events:
            if t > s:
                break
            if self.deaths:
                current = pi_map(site, k, current)
            elif k >= 0:
                current = current | l1_ball(site, k)
        return current

    def size_at(self, s: float) -> int:
        return len(self.support_at(s))


def simulate_reverse_process(model: RateModel, sites: Iterable[Site], t_ref: float,
                             horizon: float, rng: np.random.Generator,
                             deaths: bool = True,
                             step_budget: int = DEFAULT_STEP_BUDGET) -> ReversePath:
    """Set-valued jump process driven by per-site marked reverse streams.

    The law of the support path only depends on elapsed backward time, so
    ``t_ref`` is a bookkeeping reference.  Each marked event at a support
    site applies the ball replacement map; events elsewhere cannot change
    the set and are never materialized.  This is the independent oracle for
    the embedded chains of the sketch algorithms.
    """
    model.require_condition(strict=False)
    initial = frozenset(sites)
    current = set(initial)
    streams: dict[Site, ReverseMarkedPoisson] = {}
    heap: list[tuple[float, int, Site]] = []
    seq = 0

    def attach(site: Site, now: float):
        nonlocal seq
        stream = ReverseMarkedPoisson(site, float(model.m_at(site)),
                                      model.law(site).sampler(), rng)
        streams[site] = stream
        heapq.heappush(heap, (stream.next_time(now), seq, site))
        seq += 1

    for s in sorted_sites(initial):
        attach(s, 0.0)
    events: list[tuple[float, Site, int]] = []
    while current and heap:
        t, _, site = heapq.heappop(heap)
        if site not in current:
            continue  # stale clock from an earlier membership
        if t > horizon:
            break
        if len(events) >= step_budget:
            raise StepBudgetExceeded(f"reverse process exceeded {step_budget} events")
        k = streams[site].draw_mark()
        events.append((t, site, k))
        if k == -1 and deaths:
            current.discard(site)
        elif k >= 0:
            newcomers = l1_ball(site, k) - current
            current |= newcomers
            for s in sorted_sites(newcomers):
                attach(s, t)
        if site in current:
            heapq.heappush(heap, (streams[site].next_time(t), seq, site))
            seq += 1
    return ReversePath(initial, horizon, tuple(events), deaths)


def coupled_support_comparison(model: RateModel, sites: Iterable[Site], horizon: float,
                               rng: np.random.Generator,
                               step_budget: int = DEFAULT_STEP_BUDGET):
    """Drive the with- and without-deaths set processes from one event field.

    Both sets see the same (time, site, mark) stream; the with-deaths set
    stays contained in the without-deaths one, so the returned size pairs
    satisfy deaths <= no_deaths at every event time.
    """
    model.require_condition(strict=False)
    initial = frozenset(sites)
    grow = set(initial)   # never removes
    kill = set(initial)   # applies the death map
    streams: dict[Site, ReverseMarkedPoisson] = {}
    heap: list[tuple[float, int, Site]] = []
    seq = 0

    def attach(site: Site, now: float):
        nonlocal seq
        stream = ReverseMarkedPoisson(site, float(model.m_at(site)),
                                      model.law(site).sampler(), rng)
        streams[site] = stream
        heapq.heappush(heap, (stream.next_time(now), seq, site))
        seq += 1

    for s in sorted_sites(initial):
        attach(s, 0.0)
    rows: list[tuple[float, int, int]] = []
    while heap:
        t, _, site = heapq.heappop(heap)
        if site not in grow:
            continue
        if t > horizon:
            break
        if len(rows) >= step_budget:
            raise StepBudgetExceeded(f"coupled comparison exceeded {step_budget} events")
        k = streams[site].draw_mark()
        if k >= 0:
            newcomers = l1_ball(site, k) - grow
            grow |= newcomers
            if site in kill:
                kill |= l1_ball(site, k)
            for s in sorted_sites(newcomers):
                attach(s, t)
        elif site in kill:
            kill.discard(site)
        heapq.heappush(heap, (streams[site].next_time(t), seq, site))
        seq += 1
        rows.append((t, len(grow), len(kill)))
    return rows


# ---------------------------------------------------------------------------
# Growth / decay diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsRow:
    s: float
    mean_no_deaths: float
    se_no_deaths: float
    growth_envelope: float
    mean_deaths: float
    se_deaths: float
    decay_envelope: float


@dataclass(frozen=True)
class DiagnosticsReport:
    rows: tuple[DiagnosticsRow, ...]
    growth_rate: float
    decay_rate: float
    fitted_decay_slope: float


def sketch_diagnostics(model: RateModel, sites: Iterable[Site], s_grid: Sequence[float],
                       replicates: int, seed: int) -> DiagnosticsReport:
    """Monte Carlo means of the support size against the analytic envelopes.

    The no-deaths process is checked against e^{m s}; the with-deaths
    process against |F| e^{-eps s}, and its log-mean decay slope is fitted.
    """
    from .sampling import make_rng

    sites = frozenset(sites)
    s_grid = sorted(s_grid)
    smax = s_grid[-1]
    m = growth_rate(model)
    eps = decay_rate(model)
    sizes_nd = np.empty((replicates, len(s_grid)))
    sizes_d = np.empty((replicates, len(s_grid)))
    for rep in range(replicates):
        rng = make_rng(seed, 0, rep)
        tr_nd = backward_sketch_no_deaths(model, sites, smax, rng)
        rng = make_rng(seed, 1, rep)
        tr_d = backward_sketch_coupling(model, sites, smax, rng)
        for j, s in enumerate(s_grid):
            sizes_nd[rep, j] = len(support_at(tr_nd, s, deaths=False))
            sizes_d[rep, j] = len(support_at(tr_d, s, deaths=True))
    rows = []
    for j, s in enumerate(s_grid):
        rows.append(DiagnosticsRow(
            s,
            float(sizes_nd[:, j].mean()),
            float(sizes_nd[:, j].std(ddof=1) / math.sqrt(replicates)),
            math.exp(m * s),
            float(sizes_d[:, j].mean()),
            float(sizes_d[:, j].std(ddof=1) / math.sqrt(replicates)),
            len(sites) * math.exp(-eps * s),
        ))
    means = np.array([r.mean_deaths for r in rows])
    ss = np.array(s_grid, dtype=float)
    mask = means > 0
    slope = float(np.polyfit(ss[mask], np.log(means[mask]), 1)[0]) if mask.sum() >= 2 else 0.0
    return DiagnosticsReport(tuple(rows), m, eps, slope)
