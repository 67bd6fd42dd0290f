"""Seeded tail-probability estimation by block simulation.

Samples are processed in fixed blocks (rng.BLOCK_SIZE replicates each). Block
b draws its copula uniforms from the stream keyed (seed, b) and its counting
draws, when a stopped quantity needs them, from a separate lane keyed
(seed, _TAU_LANE + b). Per-block integer hit counts are summed at the end, so
the estimate is bitwise identical for any worker count and any block-to-worker
assignment.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .copulas import DependentModel
from .errors import InvalidInput, ModelConfigError
from .rng import BLOCK_SIZE, block_stream, check_seed

TAU_CAP = 1 << 20      # per-replicate cap on the simulated sequence length
_TAU_LANE = 1 << 49    # block-stream lane reserved for counting-law draws
_CHUNK_VALUES = 1 << 22  # coordinate budget per simulation slice

_KINDS = ("sum", "max", "runmax")


@dataclass(frozen=True)
class Quantity:
    """What gets thresholded per replicate.

    kind picks the reduction (terminal sum, max of the terms, or running
    maximum of the partial sums); stopped quantities take the sequence length
    from the model's counting law instead of the copula dimension.
    """

    kind: str
    stopped: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInput(f"kind must be one of {_KINDS}, got {self.kind!r}")

    @property
    def token(self) -> str:
        stem = {"sum": "Sum", "max": "Max", "runmax": "RunMax"}[self.kind]
        return stem + ("Tau" if self.stopped else "N")


SumN = Quantity("sum", False)
MaxN = Quantity("max", False)
RunMaxN = Quantity("runmax", False)
SumTau = Quantity("sum", True)
MaxTau = Quantity("max", True)
RunMaxTau = Quantity("runmax", True)

QUANTITIES = {q.token: q for q in (SumN, MaxN, RunMaxN, SumTau, MaxTau,
                                   RunMaxTau)}


def parse_quantity(token) -> Quantity:
    if isinstance(token, Quantity):
        return token
    try:
        return QUANTITIES[str(token)]
    except KeyError:
        raise InvalidInput(
            f"unknown quantity {token!r}; expected one of {sorted(QUANTITIES)}"
        ) from None


@dataclass(frozen=True)
class TailEstimate:
    """One threshold's estimate: p_hat = hits / samples with binomial stderr."""

    x: float
    p_hat: float
    stderr: float
    hits: int
    samples: int
    seed: int
    notes: tuple = ()

    def ci(self, z: float = 1.96) -> tuple:
        lo = max(0.0, self.p_hat - z * self.stderr)
        hi = min(1.0, self.p_hat + z * self.stderr)
        return (lo, hi)


def _ragged_arange(lengths: np.ndarray) -> np.ndarray:
    total = int(lengths.sum())
    ends = np.cumsum(lengths)
    return np.arange(total, dtype=np.int64) - np.repeat(ends - lengths, lengths)


def _stats_fixed(model: DependentModel, quantity: Quantity, weights,
                 rng: np.random.Generator, count: int) -> np.ndarray:
    vals = model.sample_vector(rng, count)
    if weights is not None:
        vals = vals * weights
    if quantity.kind == "max":
        return vals.max(axis=1)
    cs = np.cumsum(vals, axis=1)
    if quantity.kind == "sum":
        return cs[:, -1]
    return cs.max(axis=1)


def _chunk_stats(model: DependentModel, quantity: Quantity,
                 rng: np.random.Generator, eff: np.ndarray,
                 blocks: np.ndarray) -> np.ndarray:
    """Statistics for one slice of replicates with per-replicate lengths eff.

    Lengths are served in whole copula blocks; coordinates past a replicate's
    length are generated (to keep the stream layout a function of the counting
    draws alone) but never enter its statistic.
    """
    dim = model.dim
    count = len(eff)
    n_blocks = int(blocks.sum())
    sentinel = -math.inf if quantity.kind == "max" else 0.0
    if n_blocks == 0:
        return np.full(count, sentinel)
    u = model.copula.sample(rng, n_blocks)
    flat = model.marginals[0].ppf_from_uniform(u.ravel())
    if eff.min() == eff.max():
        # uniform lengths: plain reshape, same arithmetic order as the
        # fixed-length path, so a deterministic counting law reduces to it
        # bit for bit
        rect = flat.reshape(count, -1)[:, : int(eff[0])]
        if quantity.kind == "max":
            return rect.max(axis=1)
        cs = np.cumsum(rect, axis=1)
        return cs[:, -1] if quantity.kind == "sum" else cs.max(axis=1)
    region_starts = dim * np.concatenate(([0], np.cumsum(blocks[:-1])))
    idx = np.repeat(region_starts, eff) + _ragged_arange(eff)
    used = flat[idx]
    ends = np.cumsum(eff)
    starts = ends - eff
    nonempty = eff > 0
    starts_ne = starts[nonempty]
    out = np.full(count, sentinel)
    if quantity.kind == "max":
        out[nonempty] = np.maximum.reduceat(used, starts_ne)
        return out
    cs = np.cumsum(used)
    base = np.where(starts_ne > 0, cs[np.maximum(starts_ne - 1, 0)], 0.0)
    if quantity.kind == "sum":
        out[nonempty] = cs[ends[nonempty] - 1] - base
    else:
        out[nonempty] = np.maximum.reduceat(cs, starts_ne) - base
    return out


def _stats_stopped(model: DependentModel, quantity: Quantity,
                   rng: np.random.Generator, tau_rng: np.random.Generator,
                   count: int, cap: int) -> tuple:
    dim = model.dim
    taus = np.asarray(model.tau.sample(tau_rng, count), dtype=np.int64)
    if np.any(taus < 0):
        raise ModelConfigError("counting law produced a negative length")
    eff = np.minimum(taus, cap)
    capped = int(np.count_nonzero(taus > cap))
    blocks = (eff + dim - 1) // dim
    stats = np.empty(count)
    weight = blocks * dim
    cum = np.cumsum(weight)
    i = 0
    while i < count:
        prev = int(cum[i - 1]) if i else 0
        j = int(np.searchsorted(cum, prev + _CHUNK_VALUES, side="right"))
        j = max(j, i + 1)
        stats[i:j] = _chunk_stats(model, quantity, rng, eff[i:j], blocks[i:j])
        i = j
    return stats, capped


def _simulate_block(model, quantity, weights, xs, seed, block_index, count,
                    cap):
    rng = block_stream(seed, block_index)
    if quantity.stopped:
        tau_rng = block_stream(seed, _TAU_LANE + block_index)
        stats, capped = _stats_stopped(model, quantity, rng, tau_rng, count,
                                       cap)
    else:
        stats = _stats_fixed(model, quantity, weights, rng, count)
        capped = 0
    hits = np.array([int(np.count_nonzero(stats > x)) for x in xs],
                    dtype=np.int64)
    return hits, capped


def _run_blocks(payload):
    (model, quantity, weights, xs, seed, indices, counts, cap) = payload
    hits = np.zeros(len(xs), dtype=np.int64)
    capped = 0
    for b, c in zip(indices, counts):
        h, k = _simulate_block(model, quantity, weights, xs, seed, b, c, cap)
        hits += h
        capped += k
    return hits, capped


def estimate_tail(model: DependentModel, quantity, xs, samples: int,
                  seed: int, workers: int = 1, weights=None,
                  tau_cap: int = TAU_CAP) -> list:
    """Estimate P(stat > x) for every x in xs from `samples` replicates.

    Returns one TailEstimate per threshold. The result depends only on
    (model, quantity, weights, xs, samples, seed): the worker count changes
    the wall clock, never a single bit of the counts.
    """
    quantity = parse_quantity(quantity)
    seed = check_seed(seed)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.size == 0 or not np.all(np.isfinite(xs)):
        raise InvalidInput("xs must be a nonempty array of finite thresholds")
    if not isinstance(samples, (int, np.integer)) or samples < 1:
        raise InvalidInput("samples must be a positive integer")
    samples = int(samples)
    if not isinstance(workers, (int, np.integer)) or workers < 1:
        raise InvalidInput("workers must be a positive integer")
    workers = int(workers)
    if quantity.stopped:
        if model.tau is None:
            raise ModelConfigError(
                "stopped quantities need a counting law on the model")
        if not model.identical_marginals():
            raise ModelConfigError(
                "stopped quantities need identical marginals: the sequence "
                "extends past the copula dimension with fresh blocks")
        if weights is not None:
            raise InvalidInput("weights apply to fixed-length quantities only")
        if not isinstance(tau_cap, (int, np.integer)) or tau_cap < 1:
            raise InvalidInput("tau_cap must be a positive integer")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (model.dim,) or not np.all(np.isfinite(weights)):
            raise InvalidInput(
                f"weights must be {model.dim} finite values, one per coordinate")

    n_blocks = (samples + BLOCK_SIZE - 1) // BLOCK_SIZE
    counts = np.full(n_blocks, BLOCK_SIZE, dtype=np.int64)
    counts[-1] = samples - BLOCK_SIZE * (n_blocks - 1)
    indices = np.arange(n_blocks)

    if workers == 1 or n_blocks == 1:
        hits, capped = _run_blocks((model, quantity, weights, xs, seed,
                                    indices, counts, int(tau_cap)))
    else:
        payloads = [
            (model, quantity, weights, xs, seed, indices[w::workers],
             counts[w::workers], int(tau_cap))
            for w in range(min(workers, n_blocks))
        ]
        hits = np.zeros(len(xs), dtype=np.int64)
        capped = 0
        with ProcessPoolExecutor(max_workers=len(payloads),
                                 mp_context=mp.get_context("fork")) as pool:
            for h, k in pool.map(_run_blocks, payloads):
                hits += h
                capped += k

    notes = ()
    if capped:
        notes = (f"sequence length capped at {int(tau_cap)} in {capped} "
                 f"of {samples} replicates",)
    out = []
    for x, h in zip(xs, hits):
        p = h / samples
        se = math.sqrt(p * (1.0 - p) / samples)
        out.append(TailEstimate(float(x), float(p), float(se), int(h),
                                samples, seed, notes))
    return out
