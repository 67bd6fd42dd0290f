"""Deterministic convolution oracles: lattice measures and n-fold tail brackets.

Two paths provide ground truth for the Monte Carlo engine:

* purely atomic laws convolve exactly (direct product-sum enumeration, with an
  overflow bucket at +infinity standing in for the far tail, which is exact for
  every probe below the truncation threshold);
* continuous laws are bracketed between two lattice envelopes. Rounding every
  summand's location up to the grid produces a stochastically larger variable,
  hence an upper bound on P(S_n > x); rounding down gives the lower bound.
  Domination survives convolution, so the bracket provably contains the truth,
  and halving the step refines both envelopes monotonically.

Supports must be bounded below. Mass above x_max - (n-1) * min(support, 0)
is clamped to the top of the grid (lower envelope) or to the overflow bucket
(upper envelope); any such mass keeps the full remaining sum above every probe,
so the clamp changes no probed tail and array sizes stay bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .distributions import Marginal
from .errors import HeavyTailsError, InvalidInput, ResourceLimit

ATOM_CAP = 1 << 22
MERGE_TOL = 1e-12
PRUNE_BELOW = 1e-16
MASS_TOL = 1e-15


@dataclass(frozen=True)
class LatticeMeasure:
    """Finite atom list plus an overflow bucket at +infinity and pruning slack.

    locs must be strictly increasing, masses nonnegative. slack is mass whose
    location was discarded by pruning; tail bounds account for it.
    """

    locs: np.ndarray
    masses: np.ndarray
    inf_mass: float = 0.0
    slack: float = 0.0

    def __post_init__(self):
        locs = np.asarray(self.locs, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "masses", masses)
        if locs.ndim != 1 or locs.shape != masses.shape:
            raise InvalidInput("locs and masses must be 1-d arrays of equal length")
        if len(locs) and not np.all(np.diff(locs) > 0):
            raise InvalidInput("locations must be strictly increasing")
        if np.any(masses < 0) or self.inf_mass < 0 or self.slack < 0:
            raise InvalidInput("masses must be nonnegative")
        if not np.all(np.isfinite(locs)):
            raise InvalidInput("locations must be finite (use inf_mass for the bucket)")

    @classmethod
    def from_atoms(cls, atoms, inf_mass=0.0):
        items = sorted(atoms)
        return cls(np.array([l for l, _ in items]), np.array([m for _, m in items]),
                   inf_mass=inf_mass)

    def total(self) -> float:
        return math.fsum(self.masses.tolist()) + self.inf_mass + self.slack

    @cached_property
    def _suffix(self):
        if len(self.masses) == 0:
            return np.zeros(0)
        return np.cumsum(self.masses[::-1])[::-1]

    def tail_bounds(self, x):
        """(lower, upper) bounds on P(> x); they differ only by pruning slack."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        if len(self.locs) == 0:
            finite = np.zeros_like(xs)
        else:
            idx = np.searchsorted(self.locs, xs, side="right")
            finite = np.where(idx < len(self.locs),
                              self._suffix[np.minimum(idx, len(self.locs) - 1)], 0.0)
        lo = finite + self.inf_mass
        hi = np.minimum(lo + self.slack, 1.0)
        if np.ndim(x) == 0:
            return float(lo[0]), float(hi[0])
        return lo, hi

    def tail(self, x):
        """Exact tail when no pruning slack exists."""
        lo, hi = self.tail_bounds(x)
        if self.slack > 0.0:
            raise InvalidInput("measure carries pruning slack; use tail_bounds")
        return lo


def convolve_atoms(a: LatticeMeasure, b: LatticeMeasure,
                   merge_tol: float = MERGE_TOL, prune_below: float = PRUNE_BELOW,
                   atom_cap: int = ATOM_CAP) -> LatticeMeasure:
    """Exact distribution of the independent sum, by direct product-sum.

    Atoms closer than merge_tol merge; masses below prune_below are dropped
    into slack. The overflow bucket absorbs products with either factor's
    bucket. Total mass is conserved to 1e-15 (checked).
    """
    if len(a.locs) * len(b.locs) > atom_cap:
        raise ResourceLimit(f"product-sum would create {len(a.locs) * len(b.locs)} atoms "
                            f"(cap {atom_cap})")
    sums = np.add.outer(a.locs, b.locs).ravel()
    prods = np.multiply.outer(a.masses, b.masses).ravel()
    order = np.argsort(sums, kind="stable")
    sums, prods = sums[order], prods[order]

    merged_locs, merged_masses = _merge_close(sums, prods, merge_tol)

    keep = merged_masses >= prune_below
    slack_new = float(np.sum(merged_masses[~keep]))
    merged_locs, merged_masses = merged_locs[keep], merged_masses[keep]
    if len(merged_locs) > atom_cap:
        raise ResourceLimit(f"{len(merged_locs)} atoms after merge (cap {atom_cap})")

    fa = math.fsum(a.masses.tolist())
    fb = math.fsum(b.masses.tolist())
    inf_mass = a.inf_mass * (fb + b.inf_mass + b.slack) + b.inf_mass * (fa + a.slack)
    slack = (a.slack * (fb + b.slack) + b.slack * fa) + slack_new
    out = LatticeMeasure(merged_locs, merged_masses, inf_mass=inf_mass, slack=slack)
    if abs(out.total() - a.total() * b.total()) > MASS_TOL * max(1.0, a.total() * b.total()):
        raise HeavyTailsError("mass conservation violated in convolve_atoms")
    return out


def _merge_close(sorted_locs, masses, tol):
    if len(sorted_locs) == 0:
        return sorted_locs, masses
    new_group = np.empty(len(sorted_locs), dtype=bool)
    new_group[0] = True
    np.greater(np.diff(sorted_locs), tol, out=new_group[1:])
    starts = np.flatnonzero(new_group)
    return sorted_locs[starts], np.add.reduceat(masses, starts)


def nfold_atoms(m: LatticeMeasure, n: int, clamp_above: float = None) -> LatticeMeasure:
    """n-fold self-convolution; atoms above clamp_above move to the bucket."""
    if n < 1:
        raise InvalidInput("n must be at least 1")

    def clamp(x: LatticeMeasure) -> LatticeMeasure:
        if clamp_above is None:
            return x
        cut = np.searchsorted(x.locs, clamp_above, side="right")
        if cut >= len(x.locs):
            return x
        extra = float(np.sum(x.masses[cut:]))
        return LatticeMeasure(x.locs[:cut], x.masses[:cut],
                              inf_mass=x.inf_mass + extra, slack=x.slack)

    result = None
    base = clamp(m)
    e = n
    while e:
        if e & 1:
            result = base if result is None else clamp(convolve_atoms(result, base))
        e >>= 1
        if e:
            base = clamp(convolve_atoms(base, base))
    return result


@dataclass(frozen=True)
class TailBracket:
    """Certified bounds: lower <= P(S_n > x) <= upper."""

    x: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0 + 1e-12):
            raise InvalidInput(f"bracket out of order at x={self.x}: "
                               f"[{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class _Grid:
    """Lattice on multiples of step: index k carries location (k0 + k) * step."""

    k0: int
    step: float
    masses: np.ndarray
    inf_mass: float = 0.0

    @property
    def locs(self):
        return (self.k0 + np.arange(len(self.masses))) * self.step

    def tail(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        locs = self.locs
        suffix = np.concatenate((np.cumsum(self.masses[::-1])[::-1], [0.0]))
        idx = np.searchsorted(locs, xs, side="right")
        return suffix[idx] + self.inf_mass


def _grid_convolve(a: _Grid, b: _Grid, clamp_k: int, side: str) -> _Grid:
    masses = np.convolve(a.masses, b.masses)
    fa, fb = float(np.sum(a.masses)), float(np.sum(b.masses))
    inf_mass = a.inf_mass * (fb + b.inf_mass) + b.inf_mass * fa
    g = _Grid(a.k0 + b.k0, a.step, masses, inf_mass)
    return _grid_clamp(g, clamp_k, side)


def _grid_clamp(g: _Grid, clamp_k: int, side: str) -> _Grid:
    cut = clamp_k - g.k0 + 1  # first index with location strictly above clamp
    if cut < 0:
        cut = 0
    if cut >= len(g.masses):
        return g
    if side == "upper":
        spill = float(np.sum(g.masses[cut:]))
        return _Grid(g.k0, g.step, g.masses[:cut].copy(), g.inf_mass + spill)
    extra = float(np.sum(g.masses[cut + 1:]))
    head = g.masses[:cut + 1].copy()
    head[cut] += extra
    return _Grid(g.k0, g.step, head, g.inf_mass)


def discretize_tail(tail_fn, lo: float, hi: float, step: float, side: str) -> _Grid:
    """Lattice envelope of a law given by its tail function.

    The caller warrants that no mass sits strictly below lo. side='lower'
    rounds interval mass down (stochastically smaller), side='upper' rounds it
    up and parks mass beyond hi in the overflow bucket.
    """
    if side not in ("lower", "upper"):
        raise InvalidInput("side must be 'lower' or 'upper'")
    if step <= 0:
        raise InvalidInput("step must be positive")
    k_lo = math.floor(lo / step)
    k_hi = math.ceil(hi / step)
    if k_hi <= k_lo:
        k_hi = k_lo + 1
    if k_hi - k_lo + 1 > ATOM_CAP:
        raise ResourceLimit("grid would exceed the atom cap; increase step")
    ks = np.arange(k_lo, k_hi + 1)
    bounds = ks * step
    tails = np.asarray(tail_fn(bounds), dtype=float)
    tails = np.clip(tails, 0.0, 1.0)
    interval = np.maximum(tails[:-1] - tails[1:], 0.0)  # mass in (g_k, g_{k+1}]
    left = max(0.0, 1.0 - float(tails[0]))              # mass at or below g_klo
    right = float(tails[-1])                            # mass above g_khi
    masses = np.zeros(len(ks))
    if side == "lower":
        masses[:-1] += interval
        masses[0] += left
        masses[-1] += right
        return _Grid(k_lo, step, masses, 0.0)
    masses[1:] += interval
    masses[0] += left
    return _Grid(k_lo, step, masses, right)


def _auto_step(x_max: float) -> float:
    return max(x_max, 1.0) / 4096.0


def nfold_tail_bracket_from_tail(tail_fn, support_min: float, n: int, xs,
                                 grid_step: float = None) -> list:
    """Brackets for P(S_n > x) when S_n sums n i.i.d. copies of a law
    given by its tail function with support bounded below by support_min."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if not math.isfinite(support_min):
        raise InvalidInput("support must be bounded below")
    x_max = float(np.max(xs))
    step = float(grid_step) if grid_step else _auto_step(x_max)
    clamp_val = x_max - (n - 1) * min(support_min, 0.0) + 2.0 * step
    clamp_k = math.ceil(clamp_val / step)
    hi = (clamp_k + 1) * step

    out = []
    envs = {}
    for side in ("lower", "upper"):
        g = discretize_tail(tail_fn, support_min, hi, step, side)
        g = _grid_clamp(g, clamp_k, side)
        acc = None
        base = g
        e = n
        while e:
            if e & 1:
                acc = base if acc is None else _grid_convolve(acc, base, clamp_k, side)
            e >>= 1
            if e:
                base = _grid_convolve(base, base, clamp_k, side)
        envs[side] = acc
    lows = envs["lower"].tail(xs)
    highs = envs["upper"].tail(xs)
    for x, lo_v, hi_v in zip(xs, lows, highs):
        out.append(TailBracket(float(x), float(min(lo_v, hi_v)),
                               float(min(max(hi_v, lo_v), 1.0))))
    return out


def _atomic_threshold(d: Marginal, x_max: float, n: int) -> float:
    s_min = d.support()[0]
    return x_max - (n - 1) * min(s_min, 0.0) - min(s_min, 0.0) + 1.0


def nfold_tail_bracket(d: Marginal, n: int, xs, grid_step: float = None) -> list:
    """Brackets for P(X_1 + ... + X_n > x), X_i i.i.d. with law d.

    Purely atomic laws take the exact path (zero-width brackets up to pruning
    slack); continuous laws are bracketed by lattice envelopes.
    """
    xs_arr = np.atleast_1d(np.asarray(xs, dtype=float))
    if n < 1:
        raise InvalidInput("n must be at least 1")
    x_max = float(np.max(xs_arr))
    rep = d.truncated_atoms(_atomic_threshold(d, x_max, n))
    if rep is not None:
        locs, masses, overflow = rep
        base = LatticeMeasure(np.asarray(locs, dtype=float),
                              np.asarray(masses, dtype=float), inf_mass=overflow)
        clamp_above = x_max - (n - 1) * min(d.support()[0], 0.0) + 0.5
        m = nfold_atoms(base, n, clamp_above=clamp_above)
        lo_v, hi_v = m.tail_bounds(xs_arr)
        return [TailBracket(float(x), float(l), float(h))
                for x, l, h in zip(xs_arr, lo_v, hi_v)]
    s_min = d.support()[0]
    return nfold_tail_bracket_from_tail(
        lambda t: d.tail(t), s_min, n, xs_arr, grid_step=grid_step)


@dataclass(frozen=True)
class ExactRatioCurve:
    """Exact two-fold ratio curve r(x) = P(S_2 > x) / P(X > x) on atom probes."""

    xs: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray
    ratios: np.ndarray
    running_min: np.ndarray

    @property
    def final_min(self) -> float:
        return float(self.running_min[-1])


def exact_twofold_ratio_curve(d: Marginal, lo: float = None, hi: float = None,
                              x_points=None) -> ExactRatioCurve:
    """Exact r(x) = P(X_1 + X_2 > x) / P(X > x) for an atomic law.

    Give either a range [lo, hi] or explicit x_points. On a range, the curve
    is probed at every atom of the sum law and of the single law (plus lo
    itself): both tails are step functions jumping only there, so this
    captures every value the ratio takes on the interval.
    """
    if x_points is not None:
        probes_in = np.unique(np.asarray(x_points, dtype=float))
        if len(probes_in) == 0:
            raise InvalidInput("x_points must be nonempty")
        hi = float(probes_in[-1])
    elif lo is None or hi is None:
        raise InvalidInput("give either x_points or both lo and hi")
    rep = d.truncated_atoms(_atomic_threshold(d, hi, 2))
    if rep is None:
        raise InvalidInput("exact ratio curve requires a purely atomic law")
    locs, masses, overflow = rep
    base = LatticeMeasure(np.asarray(locs, dtype=float),
                          np.asarray(masses, dtype=float), inf_mass=overflow)
    two = convolve_atoms(base, base)
    if x_points is not None:
        probes = probes_in
    else:
        probes = np.unique(np.concatenate((
            two.locs[(two.locs >= lo) & (two.locs <= hi)],
            base.locs[(base.locs >= lo) & (base.locs <= hi)],
            [lo])))
    num = two.tail(probes)
    den = np.asarray(d.tail(probes), dtype=float)
    if np.any(den <= 0):
        raise InvalidInput("single tail vanishes on the probe range")
    ratios = num / den
    return ExactRatioCurve(probes, num, den, ratios, np.minimum.accumulate(ratios))
