"""Discrete-time and arrival-driven insurance ruin built on the tail engine.

Ruin by a finite horizon is a running maximum in disguise: the surplus goes
negative exactly when the discounted claim sums climb past the initial
capital, so both models here delegate to the running-max estimators and
grade the result against the matching one-big-claim denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import experiments as ex
from . import montecarlo as mc
from .copulas import DependentModel, FGM, Independence
from .counting import Poisson
from .distributions import Marginal, Pareto, ShiftedBy
from .errors import InvalidInput, ModelConfigError
from .rng import block_stream, check_seed


@dataclass(frozen=True)
class DiscreteRiskModel:
    """Periodic net claims with constant interest over a fixed horizon.

    The horizon is the dimension of the claims model; claim k is discounted
    by (1+rate)^-k, and ruin by period n means the discounted claim total
    exceeded the initial surplus at some k <= n.
    """

    claims: DependentModel
    rate: float = 0.0

    def __post_init__(self):
        if self.claims.tau is not None:
            raise ModelConfigError(
                "a fixed-horizon model cannot carry a counting law")
        if not (math.isfinite(self.rate) and self.rate > -1.0):
            raise InvalidInput("rate must be a finite number above -1")

    @property
    def horizon(self) -> int:
        return self.claims.dim

    def discount_weights(self) -> np.ndarray:
        g = 1.0 + self.rate
        return g ** -np.arange(1, self.horizon + 1, dtype=float)

    def ruin_prob(self, xs, samples: int = 1_000_000, seed: int = 0,
                  workers: int = 1) -> list:
        """P(ruin by the horizon) at each initial surplus in xs."""
        return mc.estimate_tail(self.claims, mc.RunMaxN, xs, samples, seed,
                                workers=workers,
                                weights=self.discount_weights())

    def ruin_curve(self, x_grid=None, samples: int = 1_000_000, seed: int = 0,
                   workers: int = 1, tolerance: float = 0.15,
                   experiment_id: str = "ruin") -> ex.RatioCurve:
        """Ruin probability over the sum of discounted claim tails."""
        return ex.run_experiment(
            self.claims, mc.RunMaxN, ex.Denominator("discounted",
                                                    rate=self.rate),
            x_grid=x_grid, samples=samples, seed=seed, workers=workers,
            predicted=1.0, semantics="lim", tolerance=tolerance,
            experiment_id=experiment_id, numerator="mc",
            weights=self.discount_weights())

    def surplus_path(self, initial_surplus: float, seed: int,
                     replicate: int = 0) -> list:
        """One simulated surplus trajectory [(k, U_k)], k = 0..horizon.

        U_k = (1+rate)^k (x - sum_{j<=k} X_j (1+rate)^-j), so the path dips
        below zero exactly when the discounted running maximum beats x.
        """
        if not (initial_surplus >= 0.0 and math.isfinite(initial_surplus)):
            raise InvalidInput("initial surplus must be finite and >= 0")
        check_seed(seed)
        if replicate < 0 or int(replicate) != replicate:
            raise InvalidInput("replicate must be a nonnegative integer")
        rng = block_stream(seed, 0)
        rows = self.claims.sample_vector(rng, int(replicate) + 1)
        x_j = rows[-1]
        discounted = np.cumsum(x_j * self.discount_weights())
        g = 1.0 + self.rate
        path = [(0, float(initial_surplus))]
        for k in range(1, self.horizon + 1):
            path.append((k, float(g ** k * (initial_surplus
                                            - discounted[k - 1]))))
        return path


@dataclass(frozen=True)
class ArrivalRiskModel:
    """Premium-funded surplus hit by claims arriving as a Poisson count.

    Each claim costs Z minus the premium earned per arrival, (1+loading)
    times the mean claim; ruin within the horizon is the running maximum of
    those net costs over a Poisson(intensity * horizon) number of terms.
    """

    claim_size: Marginal
    loading: float
    intensity: float
    horizon: float

    _BLOCK_DIM = 2

    def __post_init__(self):
        if self.claim_size.support()[0] < 0:
            raise ModelConfigError("claim sizes must be nonnegative")
        if not math.isfinite(self.claim_size.mean()):
            raise ModelConfigError("claim sizes need a finite mean")
        if not (math.isfinite(self.loading) and self.loading > 0):
            raise InvalidInput("loading must be positive")
        if not (math.isfinite(self.intensity) and self.intensity > 0):
            raise InvalidInput("arrival intensity must be positive")
        if not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise InvalidInput("horizon must be finite and >= 0")

    @property
    def expected_count(self) -> float:
        return self.intensity * self.horizon

    @property
    def premium_per_claim(self) -> float:
        return (1.0 + self.loading) * self.claim_size.mean()

    def net_claim(self) -> Marginal:
        return ShiftedBy(self.claim_size, -self.premium_per_claim)

    def dependence_model(self) -> DependentModel:
        net = self.net_claim()
        return DependentModel(Independence(self._BLOCK_DIM),
                              tuple(net for _ in range(self._BLOCK_DIM)),
                              tau=Poisson(self.expected_count))

    def ruin_prob(self, xs, samples: int = 1_000_000, seed: int = 0,
                  workers: int = 1) -> list:
        """P(ruin within the horizon) at each initial surplus in xs."""
        return mc.estimate_tail(self.dependence_model(), mc.RunMaxTau, xs,
                                samples, seed, workers=workers)

    def ruin_curve(self, x_grid=None, samples: int = 1_000_000, seed: int = 0,
                   workers: int = 1, tolerance: float = 0.15,
                   experiment_id: str = "ruin-arrival") -> ex.RatioCurve:
        """Ruin probability over (expected claim count) x (claim-size tail).

        The denominator uses the tail of the claim size itself, not the
        premium-shifted net cost: for long-tailed claims the constant
        premium offset washes out of the tail, and the unshifted form is
        the quantity an underwriter can read off the claim severity table.
        """
        if x_grid is None:
            lo = float(self.claim_size.quantile(0.9))
            hi = float(self.claim_size.quantile(1.0 - 1e-4))
            x_grid = np.geomspace(max(lo, 1e-9), hi, 24)
        return ex.run_experiment(
            self.dependence_model(), mc.RunMaxTau,
            _MeanCountClaimTail(self.claim_size, self.expected_count),
            x_grid=x_grid, samples=samples, seed=seed, workers=workers,
            predicted=1.0, semantics="lim", tolerance=tolerance,
            experiment_id=experiment_id, numerator="mc")


@dataclass(frozen=True)
class _MeanCountClaimTail:
    """Denominator adapter: expected count times the claim-size tail."""

    claim_size: Marginal
    expected_count: float

    def describe(self) -> str:
        return f"mean_count_x_claim_tail(count={self.expected_count:g})"

    def values(self, model, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        return self.expected_count * np.array(
            [float(self.claim_size.tail(x)) for x in xs])


@dataclass(frozen=True)
class RiskPreset:
    preset_id: str
    description: str
    build: object
    samples: int
    tolerance: float
    x_grid: tuple

    def run(self, samples: int = None, seed: int = 0,
            workers: int = 1, x_grid=None) -> ex.RatioCurve:
        model = self.build()
        return model.ruin_curve(
            x_grid=np.asarray(x_grid if x_grid is not None else self.x_grid,
                              dtype=float),
            samples=self.samples if samples is None else int(samples),
            seed=seed, workers=workers, tolerance=self.tolerance,
            experiment_id=self.preset_id)


RISK_PRESETS = {
    "C5.1": RiskPreset(
        "C5.1",
        "two-period discounted ruin with positively dependent unit-index "
        "claims: ruin over the discounted tail sum tends to one",
        lambda: DiscreteRiskModel(
            DependentModel(FGM.bivariate(1.0),
                           (Pareto(1.0, 1.0), Pareto(1.0, 1.0))),
            rate=0.05),
        samples=10_000_000, tolerance=0.15,
        x_grid=tuple(np.geomspace(10.0, 1e3, 16))),
    "C5.2": RiskPreset(
        "C5.2",
        "Poisson-arrival ruin with square-tailed claims and 10% loading: "
        "ruin over (expected count) x (claim tail) tends to one",
        lambda: ArrivalRiskModel(Pareto(2.0, 1.0), loading=0.1,
                                 intensity=2.0, horizon=1.0),
        samples=10_000_000, tolerance=0.15,
        x_grid=tuple(np.geomspace(3.1622776601683795, 100.0, 16))),
}
