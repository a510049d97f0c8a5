"""Forward coloring of sketch traces and the exact stationary samplers.

A sketch trace is replayed in chronological order (last record first): each
record redraws its site's color, either spontaneously (range -1) or from the
radius-K kernel evaluated on the already-colored window.  Replaying a
terminated with-deaths trace from a fully uncolored lattice yields an exact
draw of the invariant measure on the input sites; combining it with a timed
no-deaths trace yields a stationary trajectory over a finite window.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .lattice import Site, ball_offsets, translate
from .rates import RateModel
from .sampling import next_u53
from .sketch import (
    DEFAULT_STEP_BUDGET,
    SketchTrace,
    backward_sketch,
    backward_sketch_coupling,
    backward_sketch_no_deaths,
)


class UncoloredWindowError(RuntimeError):
    """A kernel draw needed a site that has no color yet.

    For traces produced by the terminating sketch this cannot happen; seeing
    it means the trace and the initial coloring do not belong together.
    """


def _read_window(config: Mapping[Site, int], center: Site, k: int, d: int) -> tuple[int, ...]:
    colors = []
    missing = []
    for off in ball_offsets(d, k):
        site = translate(center, off)
        c = config.get(site)
        if c is None:
            missing.append(site)
        else:
            colors.append(c)
    if missing:
        raise UncoloredWindowError(
            f"window of radius {k} at {center} reads uncolored sites {missing}")
    return tuple(colors)


@dataclass(frozen=True)
class ColoringResult:
    drawn: tuple[int, ...]        # color drawn per record, aligned with trace.records
    config: dict[Site, int]       # final configuration on every touched site


def forward_coloring_with_initial(model: RateModel, trace: SketchTrace,
                                  initial: Mapping[Site, int],
                                  rng: np.random.Generator | None,
                                  shared_u: Sequence[int] | None = None) -> ColoringResult:
    """Replay a timed trace forward from given colors on its final support.

    One uniform is consumed per record, in replay order; ``shared_u`` (one
    value per record, indexed like the records) substitutes the draws so two
    replays can share all randomness.
    """
    missing = trace.support - set(initial)
    if missing:
        raise UncoloredWindowError(f"initial coloring misses support sites {missing}")
    config = dict(initial)
    n = trace.n_stop
    drawn: list[int | None] = [None] * n
    for idx in range(n - 1, -1, -1):
        rec = trace.records[idx]
        if rec.k == -1:
            sampler = model.kernel_sampler(rec.site, -1, ())
        else:
            window = _read_window(config, rec.site, rec.k, model.d)
            sampler = model.kernel_sampler(rec.site, rec.k, window)
        u = shared_u[idx] if shared_u is not None else next_u53(rng)
        w = sampler.sample(u)
        config[rec.site] = w
        drawn[idx] = w
    return ColoringResult(tuple(drawn), config)


def forward_coloring(model: RateModel, trace: SketchTrace,
                     rng: np.random.Generator) -> dict[Site, int]:
    """Replay a terminated with-deaths trace from an uncolored lattice.

    Every window read is guaranteed to be colored already (each support site
    of a read window dies later in backward time, hence is colored earlier
    in the replay); the guarantee is asserted, not assumed.  Returns the
    colors on the trace's input sites.
    """
    if not trace.died:
        raise ValueError("forward coloring needs a trace whose support died out")
    config: dict[Site, int] = {}
    for idx in range(trace.n_stop - 1, -1, -1):
        rec = trace.records[idx]
        if rec.k == -1:
            sampler = model.kernel_sampler(rec.site, -1, ())
        else:
            window = _read_window(config, rec.site, rec.k, model.d)
            sampler = model.kernel_sampler(rec.site, rec.k, window)
        config[rec.site] = sampler.sample(next_u53(rng))
    return {s: config[s] for s in trace.sites}


def perfect_sample(model: RateModel, sites: Iterable[Site], rng: np.random.Generator,
                   step_budget: int = DEFAULT_STEP_BUDGET) -> dict[Site, int]:
    """Exact draw from the invariant measure, restricted to the given sites."""
    sites = frozenset(sites)
    if not sites:
        return {}
    trace = backward_sketch(model, sites, rng, step_budget)
    return forward_coloring(model, trace, rng)


# ---------------------------------------------------------------------------
# Stationary trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant, right-continuous evolution of a finite site set."""

    horizon: float
    sites: frozenset[Site]
    initial: dict[Site, int]
    jumps: dict[Site, tuple[tuple[float, int], ...]]

    def value_at(self, site: Site, s: float) -> int:
        if not 0 <= s <= self.horizon:
            raise ValueError(f"time {s} outside [0, {self.horizon}]")
        times = [t for t, _ in self.jumps[site]]
        idx = bisect_right(times, s)
        if idx == 0:
            return self.initial[site]
        return self.jumps[site][idx - 1][1]

    def state_at(self, s: float) -> dict[Site, int]:
        return {site: self.value_at(site, s) for site in self.sites}

    @property
    def n_jumps(self) -> int:
        return sum(len(v) for v in self.jumps.values())


def stationary_trajectory(model: RateModel, sites: Iterable[Site], horizon: float,
                          rng: np.random.Generator,
                          step_budget: int = DEFAULT_STEP_BUDGET) -> Trajectory:
    """Sample the stationary process on the given sites over [0, horizon].

    Pipeline: a timed no-deaths sketch discovers the support whose time-0
    colors matter; the terminating sketch plus forward coloring produces an
    exact stationary draw on that support; replaying the timed trace forward
    then yields the whole trajectory.  The one record beyond the horizon
    belongs to the replay (the stationary draw is the state just before it)
    but its jump lands at a nonpositive time and is folded into the time-0
    state; emitted jump times all lie in (0, horizon].
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sites = frozenset(sites)
    outer = backward_sketch_no_deaths(model, sites, horizon, rng, step_budget)
    inner = backward_sketch(model, outer.support, rng, step_budget)
    initial_cfg_support = forward_coloring(model, inner, rng)
    colored = forward_coloring_with_initial(model, outer, initial_cfg_support, rng)

    state0 = {s: initial_cfg_support[s] for s in sites}
    jumps: dict[Site, list[tuple[float, int]]] = {s: [] for s in sites}
    n = outer.n_stop
    for fwd in range(1, n + 1):
        idx = n - fwd
        rec = outer.records[idx]
        s_n = horizon - rec.t
        if rec.site not in sites:
            continue
        w = colored.drawn[idx]
        if s_n <= 0:
            state0[rec.site] = w
        else:
            jumps[rec.site].append((s_n, w))
    return Trajectory(horizon, sites, state0,
                      {s: tuple(v) for s, v in jumps.items()})


# ---------------------------------------------------------------------------
# Coupling experiment
# ---------------------------------------------------------------------------


def constant_rule(color: int) -> Callable[[Site], int]:
    def rule(site: Site) -> int:
        return color
    return rule


def checkerboard_rule(even: int = 0, odd: int = 1) -> Callable[[Site], int]:
    def rule(site: Site) -> int:
        return even if sum(site) % 2 == 0 else odd
    return rule


@dataclass(frozen=True)
class CouplingResult:
    disagree: bool
    died: bool
    support_size: int


def coupling_experiment(model: RateModel, rule_a: Callable[[Site], int],
                        rule_b: Callable[[Site], int], sites: Iterable[Site],
                        horizon: float, rng: np.random.Generator,
                        step_budget: int = DEFAULT_STEP_BUDGET) -> CouplingResult:
    """Run two initial conditions through one shared event history.

    A single timed with-deaths sketch supplies the (T, I, K) draws; the two
    replays share every color uniform and differ only in the time-0 colors.
    Here the initial configurations are pinned at time 0 exactly, so only
    events strictly inside the window replay: the trailing record that
    overshot the backward horizon is dropped, and the initial rules color
    the support as it stood at time 0 (before that overshoot step).  If the
    support died before the horizon the outputs agree by construction and
    no coloring is needed.
    """
    sites = frozenset(sites)
    trace = backward_sketch_coupling(model, sites, horizon, rng, step_budget)
    active = tuple(r for r in trace.records if r.t < horizon)
    from .sketch import replay_support

    support0 = replay_support(sites, active, deaths=True)[-1]
    if not support0:
        # the support emptied inside the window: every color is drawn from
        # shared randomness, so the two copies agree surely
        return CouplingResult(False, True, 0)
    clipped = SketchTrace(sites, active, support0, horizon, trace.t_stop, False)
    shared = [next_u53(rng) for _ in active]
    init_a = {s: rule_a(s) for s in support0}
    init_b = {s: rule_b(s) for s in support0}
    res_a = forward_coloring_with_initial(model, clipped, init_a, None, shared_u=shared)
    res_b = forward_coloring_with_initial(model, clipped, init_b, None, shared_u=shared)

    def final_color(res, site):
        if site in res.config:
            return res.config[site]
        raise UncoloredWindowError(f"site {site} missing from coupled replay")

    disagree = any(final_color(res_a, s) != final_color(res_b, s) for s in sites)
    return CouplingResult(disagree, False, len(support0))
