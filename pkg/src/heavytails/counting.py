"""Counting laws for randomly stopped sums: pmf, mean, tail, and sampling.

All samplers are driven by a numpy Generator so that one stream state yields
one output sequence; Deterministic draws consume no randomness at all, which
lets a Deterministic(n) stopped sum reproduce the fixed-n estimate bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special as sc

from .errors import InvalidInput

_ZETA_EXACT_BELOW = 512
_TAU_CLAMP = 1 << 62  # int64-representable guard for astronomically large draws


def _check_count(k) -> int:
    kk = int(k)
    if kk != k or kk < 0:
        raise InvalidInput(f"count argument must be a nonnegative integer, got {k!r}")
    return kk


class CountingLaw:
    def pmf(self, k: int) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def tail(self, k: int) -> float:
        """P(tau > k)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Poisson(CountingLaw):
    lam: float

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidInput("lam must be finite and nonnegative")

    def pmf(self, k):
        k = _check_count(k)
        if self.lam == 0:
            return 1.0 if k == 0 else 0.0
        return math.exp(k * math.log(self.lam) - self.lam - math.lgamma(k + 1))

    def mean(self):
        return self.lam

    def tail(self, k):
        k = _check_count(k)
        return float(sc.gammainc(k + 1, self.lam))

    def sample(self, rng, size):
        return rng.poisson(self.lam, int(size)).astype(np.int64)


@dataclass(frozen=True)
class Geometric1(CountingLaw):
    """Support {1, 2, ...}: p at 1, p(1-p)^(k-1) beyond. Light-tailed."""

    p: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InvalidInput("p must lie in (0, 1]")

    def pmf(self, k):
        k = _check_count(k)
        if k == 0:
            return 0.0
        return self.p * (1.0 - self.p) ** (k - 1)

    def mean(self):
        return 1.0 / self.p

    def tail(self, k):
        k = _check_count(k)
        return (1.0 - self.p) ** k

    def sample(self, rng, size):
        if self.p == 1.0:
            return np.ones(int(size), dtype=np.int64)
        v = 1.0 - rng.random(int(size))  # in (0, 1]
        draws = np.ceil(np.log(v) / math.log1p(-self.p))
        return np.maximum(draws, 1.0).astype(np.int64)


@dataclass(frozen=True)
class Zeta(CountingLaw):
    """pmf proportional to k^(-s) on {1, 2, ...} with s in (1, 2]: infinite mean.

    Normalization and tails use an exact partial sum below 512 plus an
    Euler-Maclaurin remainder, absolute error below 1e-13.
    """

    s: float

    def __post_init__(self):
        if not 1.0 < self.s <= 2.0:
            raise InvalidInput("s must lie in (1, 2]")

    @cached_property
    def _head(self):
        # head[k] = sum_{j<=k} j^-s for k = 0..511, head[0] = 0
        j = np.arange(1, _ZETA_EXACT_BELOW, dtype=float)
        return np.concatenate(([0.0], np.cumsum(j ** (-self.s))))

    def _suffix(self, k):
        """sum_{j>=k} j^-s for k >= 1 (array in, array out)."""
        k = np.asarray(k, dtype=float)
        big = np.maximum(k, _ZETA_EXACT_BELOW)
        s = self.s
        em = (big ** (1.0 - s) / (s - 1.0) + 0.5 * big ** (-s)
              + s / 12.0 * big ** (-s - 1.0)
              - s * (s + 1.0) * (s + 2.0) / 720.0 * big ** (-s - 3.0))
        small = k < _ZETA_EXACT_BELOW
        if np.any(small):
            idx = np.clip(k.astype(np.int64), 1, _ZETA_EXACT_BELOW)
            head_part = self._head[_ZETA_EXACT_BELOW - 1] - self._head[idx - 1]
            em = np.where(small, head_part + self._em_at_cut, em)
        return em

    @cached_property
    def _em_at_cut(self):
        s, big = self.s, float(_ZETA_EXACT_BELOW)
        return (big ** (1.0 - s) / (s - 1.0) + 0.5 * big ** (-s)
                + s / 12.0 * big ** (-s - 1.0)
                - s * (s + 1.0) * (s + 2.0) / 720.0 * big ** (-s - 3.0))

    @cached_property
    def _norm(self):
        return float(self._suffix(np.array(1.0)))

    def pmf(self, k):
        k = _check_count(k)
        if k == 0:
            return 0.0
        return k ** (-self.s) / self._norm

    def mean(self):
        return math.inf  # s <= 2

    def tail(self, k):
        k = _check_count(k)
        return float(self._suffix(np.array(float(k + 1)))) / self._norm

    def sample(self, rng, size):
        u = rng.random(int(size))
        # invert P(tau > k) = suffix(k+1)/Z at 1-u by bisection on k
        target = (1.0 - u) * self._norm
        clamp = float(_TAU_CLAMP)
        with np.errstate(over="ignore"):
            lead = (target * (self.s - 1.0)) ** (1.0 / (1.0 - self.s))
        hi = np.minimum(np.maximum(np.ceil(lead * 4.0 + 8.0), 8.0), clamp)
        while True:  # grow until suffix(hi+1) <= target everywhere (or clamped)
            bad = (self._suffix(hi + 1.0) > target) & (hi < clamp)
            if not np.any(bad):
                break
            hi = np.minimum(np.where(bad, hi * 2.0, hi), clamp)
        lo = np.zeros_like(hi)  # invariant: suffix(lo+1) > target >= suffix(hi+1)
        # 128 rounds pin hi to integer resolution wherever float64 can represent
        # it; beyond 2^53 adjacent floats differ by more than 1 and the residual
        # slack is irrelevant (those draws are clamped and prefix-capped anyway).
        for _ in range(128):
            if not np.any(hi - lo > 0.5):
                break
            mid = np.floor((lo + hi) / 2.0)
            take_hi = (self._suffix(mid + 1.0) <= target) & (mid > lo)
            hi = np.where(take_hi, mid, hi)
            lo = np.where(take_hi | (mid <= lo), lo, mid)
        return np.maximum(np.minimum(hi, float(_TAU_CLAMP)), 1.0).astype(np.int64)


@dataclass(frozen=True)
class Deterministic(CountingLaw):
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise InvalidInput("n must be a nonnegative integer")
        object.__setattr__(self, "n", int(self.n))

    def pmf(self, k):
        k = _check_count(k)
        return 1.0 if k == self.n else 0.0

    def mean(self):
        return float(self.n)

    def tail(self, k):
        k = _check_count(k)
        return 1.0 if k < self.n else 0.0

    def sample(self, rng, size):
        # consumes no randomness by design
        return np.full(int(size), self.n, dtype=np.int64)
