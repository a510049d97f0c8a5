"""Mixture decomposition of finite-range raw rates into range-indexed kernels.

Given raw rates of reach R, enumerate all radius-R windows, take per-level
infima r^[k](a|w) over annulus extensions, and derive

    alpha(k)  = M * min_w sum_a r^[k](a|w)          (saturates at M for k = R)
    lambda(k) = (alpha(k) - alpha(k-1)) / M
    p^[k]     = reallocated kernels such that
                c(a, w) = M * sum_k lambda(k) p^[k](a | w restricted to V(k)).

The kernels are produced twice: once as the piecewise-constant integral of
the conditional-level kernels over the coupling interval, and once by the
indicator bookkeeping over level pairs.  Any disagreement is a hard error.
All arithmetic is exact (Fractions), so the reconstruction identity holds
with zero error for every model within the enumeration budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Mapping

from .lattice import ball_offsets, l1_norm
from .rates import ModelError, RateModel, RawRates, parse_number

DEFAULT_ENUM_BUDGET = 200_000


class EnumerationBudgetError(ModelError):
    """Window enumeration would exceed the configured budget."""


class DecompositionError(ModelError):
    """Internal inconsistency while decomposing (broken infima or kernels)."""


@dataclass
class Decomposition:
    """Tables (alpha, lambda, r, tilde_p, lambda_cond, p) for one model."""

    d: int
    n_colors: int
    reach: int
    M: Fraction
    alpha: dict[int, Fraction]
    lam: dict[int, Fraction]
    r: dict[int, dict[tuple, tuple]]
    tilde_p: dict[int, dict[tuple, tuple]]
    lam_cond: dict[int, dict[tuple, Fraction]]
    p: dict[int, dict[tuple, tuple]]

    def kernel(self, k: int, colors: tuple[int, ...]) -> tuple[Fraction, ...]:
        try:
            return self.p[k][tuple(colors)]
        except KeyError:
            raise ModelError(f"no kernel for radius {k}, window {colors}") from None

    def cumulative_mass(self, k: int, colors: tuple[int, ...]) -> Fraction:
        """alpha(k, w) = M * sum_{l<=k} lambda(l, w(V(l))) = M * sum_a r^[k](a|w)."""
        return self.M * sum(self.r[k][tuple(colors)], Fraction(0))

    def restrict(self, colors: tuple[int, ...], from_k: int, to_k: int) -> tuple[int, ...]:
        offs = ball_offsets(self.d, from_k)
        return tuple(c for c, o in zip(colors, offs) if l1_norm(o) <= to_k)

    def reconstruct(self, a: int, colors: tuple[int, ...]) -> Fraction:
        """M * sum_k lambda(k) p^[k](a | restriction of the reach window)."""
        total = Fraction(0)
        for k, lam in self.lam.items():
            if lam == 0:
                continue
            sub = self.restrict(colors, self.reach, k)
            total += lam * self.p[k][sub][a]
        return self.M * total

    # -- serialization ------------------------------------------------------

    def as_json_dict(self) -> dict:
        def frac(x):
            return str(x)

        def table(tbl):
            return {",".join(map(str, w)): [frac(v) for v in vals]
                    for w, vals in sorted(tbl.items())}

        return {
            "dimension": self.d,
            "alphabet": self.n_colors,
            "range": self.reach,
            "M": frac(self.M),
            "alpha": {str(k): frac(v) for k, v in sorted(self.alpha.items())},
            "lambda": {str(k): frac(v) for k, v in sorted(self.lam.items())},
            "kernels": {str(k): table(tbl) for k, tbl in sorted(self.p.items())},
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Decomposition":
        def parse_table(tbl):
            out = {}
            for key, vals in tbl.items():
                w = tuple(int(c) for c in key.split(",")) if key else ()
                out[w] = tuple(parse_number(v) for v in vals)
            return out

        p = {int(k): parse_table(tbl) for k, tbl in data["kernels"].items()}
        alpha = {int(k): parse_number(v) for k, v in data["alpha"].items()}
        lam = {int(k): parse_number(v) for k, v in data["lambda"].items()}
        return cls(int(data["dimension"]), int(data["alphabet"]), int(data["range"]),
                   parse_number(data["M"]), alpha, lam, {}, {}, {}, p)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_json_dict(), fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Core enumeration
# ---------------------------------------------------------------------------


def _level_index_maps(d: int, reach: int):
    offs = ball_offsets(d, reach)
    idx = {}
    for k in range(-1, reach + 1):
        idx[k] = tuple(i for i, o in enumerate(offs) if l1_norm(o) <= k)
    return offs, idx


def _guard_budget(n_colors: int, n_offsets: int, budget: int) -> int:
    n_windows = n_colors ** n_offsets
    if n_windows > budget:
        raise EnumerationBudgetError(
            f"{n_windows} windows of {n_offsets} sites exceed the enumeration "
            f"budget {budget}")
    return n_windows


def _infima_tables(d, n_colors, raw: RawRates, budget):
    """r^[k](a | w_k) = componentwise min of p(a | .) over extensions."""
    offs, idx = _level_index_maps(d, raw.reach)
    _guard_budget(n_colors, len(offs), budget)
    levels = range(-1, raw.reach + 1)
    r = {k: {} for k in levels}
    for w in product(range(n_colors), repeat=len(offs)):
        pw = raw.dist(w)
        if len(pw) != n_colors or sum(pw) != 1 or any(v < 0 for v in pw):
            raise DecompositionError(f"raw law at window {w} is not a probability vector")
        for k in levels:
            key = tuple(w[i] for i in idx[k])
            cur = r[k].get(key)
            r[k][key] = pw if cur is None else tuple(min(a, b) for a, b in zip(cur, pw))
    return offs, idx, r


def _alpha_literal(d, n_colors, M, raw: RawRates, k, offs, idx):
    """The two-branch min/sup form of the level mass, evaluated on raw rates."""
    center = offs.index((0,) * d)
    full = list(product(range(n_colors), repeat=len(offs)))
    if k == -1:
        total = Fraction(0)
        for a in range(n_colors):
            inf_off = min(M * raw.dist(w)[a] for w in full if w[center] != a)
            sup_on = max(sum(M * raw.dist(w)[b] for b in range(n_colors) if b != a)
                         for w in full if w[center] == a)
            total += min(inf_off, M - sup_on)
        return total
    best = None
    groups: dict[tuple, list] = {}
    for w in full:
        groups.setdefault(tuple(w[i] for i in idx[k]), []).append(w)
    center_pos = idx[k].index(center)
    for key, members in groups.items():
        wc = key[center_pos]
        inf_sum = sum(min(M * raw.dist(w)[a] for w in members)
                      for a in range(n_colors) if a != wc)
        sup_sum = max(sum(M * raw.dist(w)[b] for b in range(n_colors) if b != wc)
                      for w in members)
        val = inf_sum + M - sup_sum
        best = val if best is None else min(best, val)
    return best


def _uniform(n_colors: int) -> tuple[Fraction, ...]:
    return tuple([Fraction(1, n_colors)] * n_colors)


def _kernel_coupling(A, lo, hi, tilde_at):
    """Integrate the level kernels over (lo, hi] against the level segments.

    A[l] is the cumulative conditional mass up to level l (index shifted by
    one: A[0] corresponds to level -1), with an implicit 0 below.  Segment l
    covers (A[l-1], A[l]]; zero-length segments contribute nothing.
    """
    n = len(tilde_at[0])
    acc = [Fraction(0)] * n
    prev = Fraction(0)
    for li, a_l in enumerate(A):
        seg_lo = max(prev, lo)
        seg_hi = min(a_l, hi)
        if seg_hi > seg_lo:
            t = tilde_at[li]
            wgt = seg_hi - seg_lo
            for a in range(n):
                acc[a] += wgt * t[a]
        prev = a_l
    width = hi - lo
    return tuple(v / width for v in acc)


def _kernel_indicator(A, lo, hi, tilde_at):
    """Level-pair bookkeeping with explicit indicator selection.

    Sums over pairs (lp, l) of levels below the target, keeping the pair whose
    segments bracket lo and hi; the bracketed contribution splits into the
    partial segment above lo, the full segments in between, and the partial
    segment below hi.  When lo and hi fall inside a single segment the pair
    degenerates (lp = l + 1) and the whole mass rides on that one level.
    """
    n = len(tilde_at[0])
    width = hi - lo
    ext = [Fraction(0)] + list(A)  # ext[j] = mass up to level j-2; ext[0] = 0

    def seg(j):  # cumulative mass at level index j (0-based like tilde_at)
        return ext[j + 1]

    def seg_below(j):
        return ext[j]

    k_top = len(A) - 1  # highest usable level index
    acc = None
    for lp in range(0, k_top):          # level indices -1 .. k-1 shifted to 0-based
        for l in range(lp, k_top):
            if not (seg_below(lp) < lo <= seg(lp)):
                continue
            if not (seg(l) < hi <= seg(l + 1)):
                continue
            vals = [Fraction(0)] * n
            first = seg(lp) - lo
            for a in range(n):
                vals[a] += first * tilde_at[lp][a]
            for m in range(lp + 1, l + 1):
                lam_m = seg(m) - seg_below(m)
                for a in range(n):
                    vals[a] += lam_m * tilde_at[m][a]
            last = hi - seg(l)
            for a in range(n):
                vals[a] += last * tilde_at[l + 1][a]
            acc = tuple(v / width for v in vals)
    if acc is not None:
        return acc
    # Degenerate bracket: both endpoints inside one segment.
    for j in range(0, k_top + 1):
        if seg_below(j) < lo and hi <= seg(j):
            return tuple(tilde_at[j])
    raise DecompositionError("no level pair brackets the target interval")


def decompose_raw_table(d: int, n_colors: int, M, raw: RawRates,
                        budget: int = DEFAULT_ENUM_BUDGET) -> Decomposition:
    """Full decomposition of enumerable finite-range raw rates."""
    M = parse_number(M)
    offs, idx, r = _infima_tables(d, n_colors, raw, budget)
    levels = list(range(-1, raw.reach + 1))

    # Level masses and their literal cross-check.
    a_cond = {k: {w: sum(vals, Fraction(0)) for w, vals in r[k].items()} for k in levels}
    alpha: dict[int, Fraction] = {}
    for k in levels:
        alpha[k] = M * min(a_cond[k].values())
        lit = _alpha_literal(d, n_colors, M, raw, k, offs, idx)
        if lit != alpha[k]:
            raise DecompositionError(
                f"alpha({k}) mismatch between infimum form ({alpha[k]}) and "
                f"two-branch form ({lit}); wrong diagonal rate choice?")
    if alpha[raw.reach] != M:
        raise DecompositionError("alpha does not saturate at M at full reach")

    lam: dict[int, Fraction] = {-1: alpha[-1] / M}
    for k in range(0, raw.reach + 1):
        lam[k] = (alpha[k] - alpha[k - 1]) / M
        if lam[k] < 0:
            raise DecompositionError(f"negative lambda({k}); alpha not monotone")

    # Increments, conditional masses, renormalized level kernels.
    restrict_idx = {}
    for k in range(0, raw.reach + 1):
        sub = ball_offsets(d, k)
        restrict_idx[k] = tuple(i for i, o in enumerate(sub) if l1_norm(o) <= k - 1)
    tilde: dict[int, dict[tuple, tuple]] = {-1: {}}
    lam_cond: dict[int, dict[tuple, Fraction]] = {-1: {}}
    base = r[-1][()]
    s = sum(base, Fraction(0))
    lam_cond[-1][()] = s
    tilde[-1][()] = tuple(v / s for v in base) if s > 0 else _uniform(n_colors)
    for k in range(0, raw.reach + 1):
        tilde[k], lam_cond[k] = {}, {}
        for w, vals in r[k].items():
            prev = r[k - 1][tuple(w[i] for i in restrict_idx[k])] if k > 0 else base
            delta = tuple(v - pv for v, pv in zip(vals, prev))
            if any(v < 0 for v in delta):
                raise DecompositionError(f"negative increment at level {k}, window {w}")
            lc = sum(delta, Fraction(0))
            lam_cond[k][w] = lc
            tilde[k][w] = tuple(v / lc for v in delta) if lc > 0 else _uniform(n_colors)

    # Reallocated kernels, both routes.
    p: dict[int, dict[tuple, tuple]] = {-1: {(): tilde[-1][()]}}
    for k in range(0, raw.reach + 1):
        p[k] = {}
        lo = alpha[k - 1] / M
        hi = alpha[k] / M
        for w in r[k]:
            if lam[k] == 0:
                p[k][w] = _uniform(n_colors)
                continue
            offs_k = ball_offsets(d, k)
            A, tilde_at = [], []
            for l in range(-1, k + 1):
                sub = tuple(c for c, o in zip(w, offs_k) if l1_norm(o) <= l)
                A.append(a_cond[l][sub])
                tilde_at.append(tilde[l][sub])
            via_coupling = _kernel_coupling(A, lo, hi, tilde_at)
            via_indicator = _kernel_indicator(A, lo, hi, tilde_at)
            if via_coupling != via_indicator:
                raise DecompositionError(
                    f"kernel routes disagree at level {k}, window {w}")
            if sum(via_coupling) != 1 or any(v < 0 for v in via_coupling):
                raise DecompositionError(f"kernel at level {k}, window {w} not a law")
            p[k][w] = via_coupling

    return Decomposition(d, n_colors, raw.reach, M, alpha, lam, r, tilde, lam_cond, p)


def decompose(model: RateModel, budget: int = DEFAULT_ENUM_BUDGET) -> Decomposition:
    """Decompose a model's raw rates into its mixture tables."""
    if model.raw is None:
        raise ModelError(f"model {model.name!r} exposes no raw rates to decompose")
    return decompose_raw_table(model.d, model.n_colors, model.M, model.raw, budget)


def compute_alpha(model: RateModel, k: int, budget: int = DEFAULT_ENUM_BUDGET) -> Fraction:
    """Level mass alpha(k) by exhaustive enumeration (both forms, checked)."""
    if model.raw is None:
        raise ModelError("compute_alpha needs raw rates")
    raw = model.raw
    if not (-1 <= k <= raw.reach):
        raise ModelError(f"level {k} outside [-1, {raw.reach}]")
    offs, idx, r = _infima_tables(model.d, model.n_colors, raw, budget)
    val = model.M * min(sum(vals, Fraction(0)) for vals in r[k].values())
    lit = _alpha_literal(model.d, model.n_colors, model.M, raw, k, offs, idx)
    if lit != val:
        raise DecompositionError(f"alpha({k}) forms disagree: {val} vs {lit}")
    return val


def reconstruction_error(model: RateModel, dec: Decomposition) -> float:
    """max |M sum_k lambda(k) p^[k] - raw rate| over all colors and windows."""
    offs = ball_offsets(model.d, dec.reach)
    worst = Fraction(0)
    for w in product(range(model.n_colors), repeat=len(offs)):
        target = model.raw.dist(w)
        for a in range(model.n_colors):
            err = abs(dec.reconstruct(a, w) - model.M * target[a])
            if err > worst:
                worst = err
    return float(worst)
