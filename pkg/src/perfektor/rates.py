"""Rate models: per-site update rate M, range law, and local color kernels.

A model describes a multicolor system on Z^d by the mixture form of its
change rates: an update at site i happens at rate M, consults a random
radius K ~ lambda (K = -1 means a spontaneous, configuration-free update),
and redraws the color from a kernel p^[K]( . | window of radius K).
Finite-range models additionally expose raw rates on windows, which the
decomposition module turns into (alpha, lambda, kernels) tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .lattice import Site, ball_offsets, ball_volume, l1_norm
from .sampling import DiscreteSampler


class ModelError(ValueError):
    """Invalid model specification or parameters."""


class ConditionNotSatisfied(RuntimeError):
    """A sampler precondition on the range law failed (or is inconclusive)."""


def parse_number(x) -> Fraction:
    """Exact ingestion: 'a/b' strings stay rational, floats embed exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    raise ModelError(f"cannot parse number {x!r}")


# ---------------------------------------------------------------------------
# Range laws
# ---------------------------------------------------------------------------


class FiniteRangeLaw:
    """Range distribution with finite support {-1, 0, ..., R}. Exact."""

    def __init__(self, probs: Mapping[int, Fraction]):
        items = {int(k): parse_number(v) for k, v in probs.items()}
        if any(k < -1 for k in items):
            raise ModelError("range values must be >= -1")
        if any(v < 0 for v in items.values()):
            raise ModelError("range law has a negative probability")
        if sum(items.values()) != 1:
            raise ModelError("range law must sum to exactly 1")
        self._probs = dict(sorted(items.items()))
        self.support_max = max(items)
        self._sampler = None

    def pmf(self, k: int) -> Fraction:
        return self._probs.get(k, Fraction(0))

    def items(self):
        return self._probs.items()

    def tail_mass(self, k: int) -> Fraction:
        return sum((p for j, p in self._probs.items() if j > k), Fraction(0))

    def weighted_ball_bound(self, d: int):
        """(lower, upper) bounds for sum_{k>=0} |V(k)| lambda(k); exact here."""
        s = sum((ball_volume(d, k) * p for k, p in self._probs.items() if k >= 0),
                Fraction(0))
        return s, s

    def weighted_excess(self, d: int) -> Fraction:
        """sum_{k>=1} lambda(k) (|V(k)| - 1), exact."""
        return sum(((ball_volume(d, k) - 1) * p for k, p in self._probs.items() if k >= 1),
                   Fraction(0))

    def sampler(self) -> DiscreteSampler:
        if self._sampler is None:
            ks = list(self._probs)
            self._sampler = DiscreteSampler(ks, [self._probs[k] for k in ks])
        return self._sampler

    def entropy_bits(self) -> float:
        return -sum(float(p) * math.log2(float(p)) for p in self._probs.values() if p > 0)


class SeriesRangeLaw:
    """Range law given termwise, with an optional analytic tail majorant.

    Used for laws with infinite support.  ``weighted_tail_bound(k, d)`` must
    return an upper bound for sum_{j>k} |V(j)| lambda(j); without it the
    summability checks report "inconclusive".
    """

    support_max = None

    def __init__(self, pmf_fn: Callable[[int], Fraction], head: int = 60,
                 tail_mass_fn: Callable[[int], Fraction] | None = None,
                 weighted_tail_bound_fn=None):
        self._pmf = pmf_fn
        self.head = head
        self._tail_mass = tail_mass_fn
        self._weighted_tail = weighted_tail_bound_fn

    def pmf(self, k: int):
        return self._pmf(k)

    def tail_mass(self, k: int):
        if self._tail_mass is None:
            raise ModelError("series law has no tail-mass accessor")
        return self._tail_mass(k)

    def weighted_ball_bound(self, d: int):
        head = sum(ball_volume(d, k) * self._pmf(k) for k in range(0, self.head + 1))
        if self._weighted_tail is None:
            return head, None
        return head, head + self._weighted_tail(self.head, d)

    def weighted_excess(self, d: int):
        return sum((ball_volume(d, k) - 1) * self._pmf(k) for k in range(1, self.head + 1))

    def sampler(self):
        raise ModelError("series laws are validation-only; use a finite truncation to sample")


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """A colored radius-k window around a center site."""

    center: Site
    k: int
    colors: Mapping[Site, int]

    def canonical(self) -> tuple[int, ...]:
        offs = ball_offsets(len(self.center), self.k)
        return tuple(self.colors[tuple(c + o for c, o in zip(self.center, off))]
                     for off in offs)


@dataclass(frozen=True)
class RawRates:
    """Finite-range raw rates, exposed as color laws p(a|w) = c(a,w) / M.

    ``dist_fn`` receives the colors of the radius-``reach`` window around the
    updated site in canonical offset order and returns one probability per
    color (the fixed diagonal choice is already folded in, so rows sum to 1).
    """

    reach: int
    dist_fn: Callable[[tuple[int, ...]], tuple[Fraction, ...]]

    def dist(self, colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        return self.dist_fn(colors)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class RateModel:
    """Spatially homogeneous model; the site argument is kept so that
    inhomogeneous extensions stay expressible."""

    def __init__(self, d: int, n_colors: int, M: Fraction, law,
                 labels: Sequence[str] | None = None, name: str = "model",
                 params: dict | None = None, raw: RawRates | None = None):
        if d < 1:
            raise ModelError("dimension must be >= 1")
        if n_colors < 2:
            raise ModelError("alphabet must have at least 2 colors")
        if M <= 0:
            raise ModelError("update rate M must be positive")
        self.d = d
        self.n_colors = n_colors
        self.M = parse_number(M)
        self._law = law
        self.labels = tuple(labels) if labels else tuple(str(a) for a in range(n_colors))
        self.name = name
        self.params = dict(params or {})
        self.raw = raw
        self._kernel_samplers: dict[tuple, DiscreteSampler] = {}
        self._condition_cache: dict[bool, "ConditionReport"] = {}

    @property
    def origin(self) -> Site:
        return (0,) * self.d

    def law(self, site: Site):
        return self._law

    def m_at(self, site: Site) -> Fraction:
        return self.M

    def kernel_dist(self, site: Site, k: int, colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        raise NotImplementedError

    def kernel_sampler(self, site: Site, k: int, colors: tuple[int, ...]) -> DiscreteSampler:
        dist = self.kernel_dist(site, k, colors)
        s = self._kernel_samplers.get(dist)
        if s is None:
            s = DiscreteSampler(range(self.n_colors), dist)
            self._kernel_samplers[dist] = s
        return s

    def mixture_dist(self, site: Site, colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        """sum_k lambda(k) p^[k](. | w restricted to V(k)) on a full-reach window."""
        if self.raw is None:
            raise ModelError("mixture_dist needs a declared raw reach")
        offs = ball_offsets(self.d, self.raw.reach)
        out = [Fraction(0)] * self.n_colors
        for k, lam in self.law(site).items():
            if lam == 0:
                continue
            sub = tuple(c for c, o in zip(colors, offs) if l1_norm(o) <= k)
            dist = self.kernel_dist(site, k, sub)
            for a in range(self.n_colors):
                out[a] += lam * dist[a]
        return tuple(out)

    def raw_rate(self, a: int, colors: tuple[int, ...]) -> Fraction:
        if self.raw is None:
            raise ModelError("model does not expose raw rates")
        return self.M * self.raw.dist(colors)[a]

    def condition_report(self, strict: bool) -> "ConditionReport":
        rep = self._condition_cache.get(strict)
        if rep is None:
            rep = check_condition(self, strict)
            self._condition_cache[strict] = rep
        return rep

    def require_condition(self, strict: bool) -> None:
        rep = self.condition_report(strict)
        if rep.passes is None:
            raise ConditionNotSatisfied(
                f"summability check inconclusive for model {self.name!r}: {rep.message}")
        if not rep.passes:
            raise ConditionNotSatisfied(
                f"model {self.name!r} fails the {'strict' if strict else 'finiteness'} "
                f"summability condition: {rep.message}")


class TableModel(RateModel):
    """Model backed by an explicit decomposition table (finite range)."""

    def __init__(self, decomposition, raw: RawRates, labels=None, name="table", params=None):
        law = FiniteRangeLaw(decomposition.lam)
        super().__init__(decomposition.d, decomposition.n_colors, decomposition.M,
                         law, labels=labels, name=name, params=params, raw=raw)
        self.decomposition = decomposition

    def kernel_dist(self, site, k, colors):
        return self.decomposition.kernel(k, colors)


class Example1Model(RateModel):
    """Spatial regeneration-in-one-color model, truncated at radius R.

    A site flips to color 1 at rate q_l where l is the radius of the largest
    punctured ball around it containing no 1; l is capped at R.  The closed
    forms for the mixture are exact: lambda(-1) = 1 - q_0 + q_R,
    lambda(k) = q_{k-1} - q_k, and the radius-k kernels are deterministic
    (color 1 iff the window contains a 1 off-center).
    """

    def __init__(self, d: int, q: Sequence[Fraction], labels=("0", "1"), params=None):
        R = len(q) - 1
        probs = {-1: 1 - q[0] + q[R], 0: Fraction(0)}
        for k in range(1, R + 1):
            probs[k] = q[k - 1] - q[k]
        law = FiniteRangeLaw(probs)
        self.q = tuple(q)
        self.R = R
        reach = R + 1
        raw = RawRates(reach, self._raw_dist)
        super().__init__(d, 2, Fraction(1), law, labels=labels, name="example1",
                         params=params, raw=raw)
        lam_m1 = probs[-1]
        self._p_spont = (1 - q[R] / lam_m1, q[R] / lam_m1)
        self._uniform = (Fraction(1, 2), Fraction(1, 2))
        self._delta0 = (Fraction(1), Fraction(0))
        self._delta1 = (Fraction(0), Fraction(1))
        self._norms = {k: tuple(l1_norm(o) for o in ball_offsets(d, k))
                       for k in range(0, reach + 1)}

    def _raw_dist(self, colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        norms = self._norms[self.R + 1]
        nearest = min((n for c, n in zip(colors, norms) if c == 1 and n > 0), default=None)
        l = self.R if nearest is None else min(nearest - 1, self.R)
        p1 = self.q[l]
        return (1 - p1, p1)

    def kernel_dist(self, site, k, colors):
        if k == -1:
            return self._p_spont
        if k > self.R + 1:
            raise ModelError(f"kernel radius {k} beyond model range {self.R + 1}")
        if self.law(site).pmf(k) == 0:
            return self._uniform
        norms = self._norms[k]
        seen_one = any(c == 1 and n > 0 for c, n in zip(colors, norms))
        return self._delta1 if seen_one else self._delta0


# ---------------------------------------------------------------------------
# Model constructors
# ---------------------------------------------------------------------------


def geometric_q(q0, q_inf, ratio) -> Callable[[int], Fraction]:
    """q_k = q_inf + (q0 - q_inf) * ratio**k, all exact rationals."""
    q0, q_inf, ratio = parse_number(q0), parse_number(q_inf), parse_number(ratio)
    if not (0 <= ratio < 1):
        raise ModelError("ratio must lie in [0, 1)")

    def q(k: int) -> Fraction:
        return q_inf + (q0 - q_inf) * ratio ** k

    return q


def example_model(d: int, q: Callable[[int], Fraction] | Sequence, q_inf, R: int,
                  labels=("0", "1")) -> Example1Model:
    """Radius-R truncation of the regeneration model (q_l := q_R for l >= R).

    Raw rates read windows of radius R+1.  Rejects q sequences that leave
    (0, 1), increase anywhere on 0..R, or undershoot the declared limit.
    """
    if R < 1:
        raise ModelError("truncation radius R must be >= 1")
    q_inf = parse_number(q_inf)
    if callable(q):
        qs = [parse_number(q(k)) for k in range(R + 1)]
    else:
        qs = [parse_number(v) for v in q]
        if len(qs) != R + 1:
            raise ModelError(f"need q_0..q_{R}, got {len(qs)} values")
    for k, v in enumerate(qs):
        if not (0 < v < 1):
            raise ModelError(f"q_{k} = {float(v)} outside (0, 1)")
        if k > 0 and v > qs[k - 1]:
            raise ModelError(f"q must be non-increasing; q_{k} > q_{k-1}")
    if not (0 < q_inf < 1) or q_inf > qs[-1]:
        raise ModelError("limit q_inf must lie in (0, 1) and below q_R")
    params = {"q": qs, "q_inf": q_inf, "R": R}
    return Example1Model(d, qs, labels=labels, params=params)


def spontaneous_model(d: int, probs: Sequence, labels=None) -> TableModel:
    """Pure spontaneous model: every update redraws from a fixed law."""
    from .decompose import decompose_raw_table

    ps = tuple(parse_number(p) for p in probs)
    if sum(ps) != 1 or any(p < 0 for p in ps):
        raise ModelError("spontaneous law must be a probability vector")
    n = len(ps)
    raw = RawRates(0, lambda colors: ps)
    dec = decompose_raw_table(d, n, Fraction(1), raw)
    return TableModel(dec, raw, labels=labels, name="spontaneous", params={"probs": ps})


@dataclass(frozen=True)
class MrfSpecification:
    """Single-site conditional law of a Markov random field.

    ``q_rows`` maps each assignment of colors on the 2d nearest neighbours
    (in lexicographic offset order) to a probability vector over colors.
    """

    d: int
    n_colors: int
    q_rows: Mapping[tuple[int, ...], tuple[Fraction, ...]]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        boundary = boundary_offsets(self.d)
        expected = set(product(range(self.n_colors), repeat=len(boundary)))
        if set(self.q_rows) != expected:
            raise ModelError("q_rows must cover every boundary assignment")
        for b, row in self.q_rows.items():
            if len(row) != self.n_colors:
                raise ModelError(f"row {b} has wrong length")
            if any(p < 0 for p in row) or sum(row) != 1:
                raise ModelError(f"row {b} is not a probability vector")


def boundary_offsets(d: int) -> tuple[Site, ...]:
    return tuple(o for o in ball_offsets(d, 1) if l1_norm(o) == 1)


def ising_heat_bath_spec(beta: float, d: int = 1) -> MrfSpecification:
    """Ising single-site Gibbs law: P(+1 | b) = 1 / (1 + exp(-2 beta sum(b))).

    Color 0 is spin -1, color 1 is spin +1.  The +1 row entry is the IEEE
    double of the logistic value, embedded exactly; the -1 entry is its exact
    complement, so rows sum to exactly 1.
    """
    nb = len(boundary_offsets(d))
    rows = {}
    for b in product((0, 1), repeat=nb):
        s = sum(2 * c - 1 for c in b)
        p_plus = Fraction(1.0 / (1.0 + math.exp(-2.0 * beta * s)))
        rows[b] = (1 - p_plus, p_plus)
    return MrfSpecification(d, 2, rows, labels=("-1", "+1"))


def heat_bath_model(spec: MrfSpecification) -> TableModel:
    """Single-site Gibbs resampling dynamics for a Markov random field.

    Every update redraws the color from the field's conditional law given
    the 2d nearest neighbours, so the raw rates have range 1 and M = 1.
    """
    from .decompose import decompose_raw_table

    offs = ball_offsets(spec.d, 1)
    b_idx = tuple(i for i, o in enumerate(offs) if l1_norm(o) == 1)

    def dist(colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        return spec.q_rows[tuple(colors[i] for i in b_idx)]

    raw = RawRates(1, dist)
    dec = decompose_raw_table(spec.d, spec.n_colors, Fraction(1), raw)
    return TableModel(dec, raw, labels=spec.labels, name="heat_bath",
                      params={"d": spec.d})


# ---------------------------------------------------------------------------
# Validators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    strict: bool
    lower: float
    upper: float | None
    passes: bool | None
    message: str

    @property
    def lambda_bar(self) -> float | None:
        return self.upper


def check_condition(model: RateModel, strict: bool) -> ConditionReport:
    """Summability of sup_i sum_{k>=0} |V(k)| lambda(k).

    strict=True tests the < 1 bound needed by the terminating sketch;
    strict=False only needs finiteness.  Models that cannot bound their
    tail yield passes=None ("inconclusive").
    """
    lo, hi = model.law(model.origin).weighted_ball_bound(model.d)
    lo_f = float(lo)
    if hi is None:
        return ConditionReport(strict, lo_f, None, None,
                               "no tail majorant available beyond the explicit head")
    hi_f = float(hi)
    ok = (hi < 1) if strict else True
    msg = f"lambda_bar <= {hi_f:.12g}" + ("" if ok else " (needs < 1)" if strict else "")
    return ConditionReport(strict, lo_f, hi_f, ok, msg)


@dataclass(frozen=True)
class HsReport:
    value: float
    threshold: float
    satisfied: bool
    margin: float


def check_hs_condition(spec: MrfSpecification) -> HsReport:
    """sum_a min over boundaries of Q(a | .) must strictly exceed 2d/(2d+1)."""
    total = Fraction(0)
    for a in range(spec.n_colors):
        total += min(row[a] for row in spec.q_rows.values())
    threshold = Fraction(2 * spec.d, 2 * spec.d + 1)
    return HsReport(float(total), float(threshold), total > threshold,
                    float(total - threshold))


def growth_rate(model: RateModel) -> float:
    """m = M * sum_{k>=1} lambda(k) |V(k)| (drives the no-deaths growth bound)."""
    law = model.law(model.origin)
    lo, hi = law.weighted_ball_bound(model.d)
    val = hi if hi is not None else lo
    return float(model.M * (val - law.pmf(0)))


def decay_rate(model: RateModel) -> float:
    """epsilon = M * (lambda(-1) - sum_{k>=1} lambda(k)(|V(k)| - 1))."""
    law = model.law(model.origin)
    return float(model.M * (law.pmf(-1) - law.weighted_excess(model.d)))


def validate_raw_rates(model: RateModel, budget: int = 1_000_000) -> Fraction:
    """Check raw rows sum to M with nonnegative entries; returns Gamma."""
    if model.raw is None:
        raise ModelError("model exposes no raw rates")
    offs = ball_offsets(model.d, model.raw.reach)
    n_windows = model.n_colors ** len(offs)
    if n_windows > budget:
        raise ModelError(f"raw-rate validation needs {n_windows} windows, over budget {budget}")
    center = offs.index(model.origin)
    gamma = Fraction(0)
    for w in product(range(model.n_colors), repeat=len(offs)):
        dist = model.raw.dist(w)
        if any(p < 0 for p in dist):
            raise ModelError(f"negative raw rate at window {w}")
        if sum(dist) != 1:
            raise ModelError(f"raw rates at window {w} do not sum to M")
        for a in range(model.n_colors):
            if a != w[center]:
                gamma = max(gamma, model.M * dist[a])
    return gamma


# ---------------------------------------------------------------------------
# Model spec files
# ---------------------------------------------------------------------------


def load_model_spec(source) -> RateModel:
    """Build a model from a JSON file path or an already-parsed dict.

    Schema: {"dimension": d, "alphabet": n or [labels...],
             "model": "example1" | "heat_bath" | "table", "params": {...}}.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            data = json.load(fh)
    elif isinstance(source, Mapping):
        data = source
    else:
        raise ModelError(f"cannot load model spec from {type(source)}")
    return parse_model_dict(data)


def parse_model_dict(data: Mapping) -> RateModel:
    try:
        d = int(data["dimension"])
        alphabet = data["alphabet"]
        kind = data["model"]
    except KeyError as exc:
        raise ModelError(f"model spec missing field {exc}") from exc
    if isinstance(alphabet, int):
        n_colors, labels = alphabet, None
    else:
        n_colors, labels = len(alphabet), tuple(str(a) for a in alphabet)
    params = data.get("params", {})

    if kind == "example1":
        q0 = parse_number(params.get("q0", "5/8"))
        q_inf = parse_number(params.get("q_inf", "1/2"))
        ratio = parse_number(params.get("ratio", "1/4"))
        R = int(params.get("R", 25))
        if n_colors != 2:
            raise ModelError("example1 is a two-color model")
        return example_model(d, geometric_q(q0, q_inf, ratio), q_inf, R,
                             labels=labels or ("0", "1"))

    if kind == "heat_bath":
        if "q_table" in params:
            nb = len(boundary_offsets(d))
            rows = {}
            for key, row in params["q_table"].items():
                b = tuple(int(c) for c in key.split(","))
                if len(b) != nb:
                    raise ModelError(f"boundary key {key!r} has wrong arity")
                vals = [parse_number(v) for v in row]
                total = sum(vals)
                if abs(float(total) - 1.0) > 1e-12:
                    raise ModelError(f"q_table row {key!r} does not sum to 1")
                rows[b] = tuple(v / total for v in vals)
            spec = MrfSpecification(d, n_colors, rows, labels=labels)
        else:
            beta = float(params.get("beta", 0.1))
            if n_colors != 2:
                raise ModelError("the beta parametrization is a two-color model")
            spec = ising_heat_bath_spec(beta, d)
        return heat_bath_model(spec)

    if kind == "table":
        from .decompose import decompose_raw_table

        reach = int(params["range"])
        M = parse_number(params.get("M", 1))
        offs = ball_offsets(d, reach)
        table = {}
        for key, row in params["rates"].items():
            w = tuple(int(c) for c in key.split(","))
            if len(w) != len(offs):
                raise ModelError(f"window key {key!r} has wrong arity")
            vals = [parse_number(v) for v in row]
            if sum(vals) != M:
                raise ModelError(f"rates at {key!r} must sum to M")
            table[w] = tuple(v / M for v in vals)
        if len(table) != n_colors ** len(offs):
            raise ModelError("rate table must cover every window")
        raw = RawRates(reach, lambda colors: table[colors])
        dec = decompose_raw_table(d, n_colors, M, raw)
        return TableModel(dec, raw, labels=labels, name="table", params={"range": reach})

    raise ModelError(f"unknown model kind {kind!r}")
