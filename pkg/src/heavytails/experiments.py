"""Ratio-curve experiments: tail estimates over exact asymptotic denominators.

Each experiment divides P(stat > x) by a closed-form denominator and grades
the curve against a predicted limit. Limits come in three flavors: "lim"
(the curve must settle inside a tolerance band), "liminf" (the running
minimum must come down to the band without falling through it), and
"divergence" (the curve must climb past a preset bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import montecarlo as mc
from .copulas import Comonotone, DependentModel, FGM, Independence
from .counting import CountingLaw, Geometric1, Poisson, Zeta
from .distributions import Marginal, Pareto, ShiftedBy
from .errors import AssumptionViolated, InvalidInput, ModelConfigError

Z95 = 1.96

SEMANTICS = ("lim", "liminf", "divergence")


def denom_sum_tails(marginals, x) -> float:
    """Sum of the marginal tails at a common threshold."""
    return float(sum(float(m.tail(float(x))) for m in marginals))


def denom_n_tail(f: Marginal, n: int, x) -> float:
    """n times one tail; n = 1 gives the bare single-summand tail."""
    if int(n) != n or n < 1:
        raise InvalidInput("n must be a positive integer")
    return float(n) * float(f.tail(float(x)))


def denom_mean_tau_tail(f: Marginal, tau: CountingLaw, x) -> float:
    """Expected count times one tail; infinite counts have no finite scale."""
    et = tau.mean()
    if not math.isfinite(et):
        raise AssumptionViolated(
            "the counting law has infinite mean: ratios against its expected "
            "count diverge, use a divergence-mode experiment against the bare "
            "tail instead")
    return et * float(f.tail(float(x)))


def denom_discounted(marginals, r: float, x) -> float:
    """Sum of tails at geometrically inflated thresholds x(1+r)^k, k >= 1."""
    if not r > -1.0:
        raise InvalidInput("rate must exceed -1")
    g = 1.0 + r
    return float(sum(float(m.tail(float(x) * g ** (k + 1)))
                     for k, m in enumerate(marginals)))


@dataclass(frozen=True)
class Denominator:
    """Closed-form denominator attached to a ratio experiment."""

    kind: str
    n: int = None
    rate: float = None

    _KINDS = ("sum_tails", "n_tail", "mean_tau_tail", "discounted")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidInput(f"denominator kind must be one of {self._KINDS}")
        if self.kind == "n_tail" and (self.n is None or int(self.n) < 1):
            raise InvalidInput("n_tail needs a positive n")
        if self.kind == "discounted" and (self.rate is None
                                          or not self.rate > -1.0):
            raise InvalidInput("discounted needs a rate above -1")

    def describe(self) -> str:
        if self.kind == "n_tail":
            return f"n_tail(n={self.n})"
        if self.kind == "discounted":
            return f"discounted(rate={self.rate:g})"
        return self.kind

    def values(self, model: DependentModel, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if self.kind == "sum_tails":
            return np.array([denom_sum_tails(model.marginals, x) for x in xs])
        if self.kind == "n_tail":
            return np.array([denom_n_tail(model.marginals[0], self.n, x)
                             for x in xs])
        if self.kind == "mean_tau_tail":
            if model.tau is None:
                raise ModelConfigError(
                    "mean_tau_tail denominator needs a counting law")
            return np.array([
                denom_mean_tau_tail(model.marginals[0], model.tau, x)
                for x in xs])
        return np.array([denom_discounted(model.marginals, self.rate, x)
                         for x in xs])


@dataclass(frozen=True)
class RatioPoint:
    x: float
    numerator: float
    stderr: float
    denominator: float
    ratio: float
    ci_low: float
    ci_high: float
    running_min: float


@dataclass(frozen=True)
class RatioCurve:
    experiment_id: str
    quantity: str
    denominator: str
    points: tuple
    predicted_limit: float
    semantics: str
    tolerance: float
    verdict: str
    samples: int
    seed: int
    notes: tuple = ()

    @property
    def running_min(self) -> float:
        return self.points[-1].running_min

    @property
    def ratios(self) -> np.ndarray:
        return np.array([p.ratio for p in self.points])

    @property
    def grid(self) -> np.ndarray:
        return np.array([p.x for p in self.points])


def default_grid(model: DependentModel, n: int = 24, lo_u: float = 0.9,
                 hi_u: float = 1.0 - 1e-4) -> np.ndarray:
    """Geometric grid spanning the marginals' upper tail decades.

    The low end is the largest lo_u-quantile across marginals, so every
    coordinate is already in its tail; the high end is the largest
    hi_u-quantile, so the heaviest tail reaches its deep-asymptotic regime.
    """
    lo = max(max(float(m.quantile(lo_u)) for m in model.marginals), 1e-9)
    hi = max(float(m.quantile(hi_u)) for m in model.marginals)
    if hi <= lo:
        hi = lo * 100.0
    return np.geomspace(lo, hi, int(n))


def _exact_numerator(model: DependentModel, quantity: mc.Quantity, xs):
    """Closed-form tail of the statistic where copula algebra allows it."""
    if quantity.stopped:
        return None
    if quantity.kind == "max" and model.dim <= 3:
        out = np.empty(len(xs))
        for i, x in enumerate(xs):
            u = np.array([1.0 - float(m.tail(float(x)))
                          for m in model.marginals])
            out[i] = 1.0 - float(model.copula.cdf(u))
        return np.clip(out, 0.0, 1.0)
    if (quantity.kind == "sum" and isinstance(model.copula, Comonotone)
            and model.identical_marginals()):
        d = model.marginals[0]
        return np.array([float(d.tail(float(x) / model.dim)) for x in xs])
    return None


def _verdict_lim(ratios, ci_lo, ci_hi, predicted, tol, rel_err_end):
    notes = []
    if not math.isfinite(rel_err_end):
        notes.append("no tail hits at the grid end; "
                     "increase samples or shorten the grid")
        return "inconclusive", tuple(notes)
    if rel_err_end > 0.25:
        factor = (rel_err_end / 0.25) ** 2
        notes.append(
            f"grid-end stderr is {rel_err_end:.0%} of the estimate; "
            f"roughly {factor:.0f}x more samples would pin the verdict")
        return "inconclusive", tuple(notes)
    band_lo, band_hi = predicted * (1.0 - tol), predicted * (1.0 + tol)
    k = max(2, len(ratios) // 4)
    intersects = (ci_hi[-k:] >= band_lo) & (ci_lo[-k:] <= band_hi)
    if intersects.all():
        return "consistent", tuple(notes)
    if not intersects.any():
        return "inconsistent", tuple(notes)
    return "inconclusive", tuple(notes)


def _verdict_liminf(ratios, stderrs_rel, predicted, tol):
    band_lo, band_hi = predicted * (1.0 - tol), predicted * (1.0 + tol)
    run = np.minimum.accumulate(ratios)
    i_min = int(np.argmin(ratios))
    noise_min = Z95 * stderrs_rel[i_min] * max(ratios[i_min], 0.0)
    if run[-1] + noise_min < band_lo:
        return "inconsistent"
    witness = ratios - Z95 * stderrs_rel * np.abs(ratios)
    if run[-1] >= band_lo - noise_min and np.any(witness <= band_hi):
        return "consistent"
    return "inconclusive"


def _verdict_divergence(ratios, ci_lo, ci_hi, bound):
    if ci_lo[-1] > bound:
        return "consistent"
    if ci_hi[-1] < bound:
        return "inconsistent"
    return "inconclusive"


def run_experiment(model: DependentModel, quantity, denominator: Denominator,
                   x_grid=None, samples: int = 1_000_000, seed: int = 0,
                   workers: int = 1, *, predicted: float = 1.0,
                   semantics: str = "lim", tolerance: float = 0.05,
                   experiment_id: str = "custom", numerator: str = "auto",
                   weights=None, divergence_bound: float = 10.0,
                   tau_cap: int = mc.TAU_CAP, extra_notes=()) -> RatioCurve:
    """Assemble one ratio curve and grade it.

    numerator: "auto" uses closed-form copula algebra when the quantity
    admits it (max of up to three coordinates; comonotone identical sums)
    and Monte Carlo otherwise; "mc" forces simulation; "exact" demands the
    closed form and raises if there is none.
    """
    quantity = mc.parse_quantity(quantity)
    if semantics not in SEMANTICS:
        raise InvalidInput(f"semantics must be one of {SEMANTICS}")
    if numerator not in ("auto", "mc", "exact"):
        raise InvalidInput("numerator must be auto, mc, or exact")
    if not (tolerance > 0.0):
        raise InvalidInput("tolerance must be positive")
    xs = np.atleast_1d(np.asarray(
        x_grid if x_grid is not None else default_grid(model), dtype=float))
    if np.any(~np.isfinite(xs)) or np.any(np.diff(xs) <= 0):
        raise InvalidInput("x grid must be finite and strictly increasing")

    den = denominator.values(model, xs)
    if np.any(den <= 0):
        raise InvalidInput("denominator vanishes on the grid")

    notes = list(extra_notes)
    exact = None if numerator == "mc" else _exact_numerator(model, quantity,
                                                            xs)
    if numerator == "exact" and exact is None:
        raise InvalidInput(
            f"no closed form for {quantity.token} on this model")
    if exact is not None:
        num = exact
        se = np.zeros(len(xs))
        used_samples = 0
        notes.append("numerator computed exactly, stderr identically zero")
    else:
        ests = mc.estimate_tail(model, quantity, xs, samples, seed,
                                workers=workers, weights=weights,
                                tau_cap=tau_cap)
        num = np.array([e.p_hat for e in ests])
        se = np.array([e.stderr for e in ests])
        used_samples = samples
        if ests[0].notes:
            notes.extend(ests[0].notes)

    ratios = num / den
    ci_lo = np.maximum(num - Z95 * se, 0.0) / den
    ci_hi = np.minimum(num + Z95 * se, 1.0) / den
    run = np.minimum.accumulate(ratios)
    rel = np.where(num > 0, se / np.maximum(num, 1e-300), np.inf)

    if semantics == "lim":
        verdict, vnotes = _verdict_lim(ratios, ci_lo, ci_hi, predicted,
                                       tolerance, float(rel[-1]))
        notes.extend(vnotes)
    elif semantics == "liminf":
        verdict = _verdict_liminf(ratios, rel, predicted, tolerance)
    else:
        verdict = _verdict_divergence(ratios, ci_lo, ci_hi, divergence_bound)
        predicted = math.inf

    points = tuple(
        RatioPoint(float(x), float(n_), float(s), float(d), float(r_),
                   float(lo), float(hi), float(rm))
        for x, n_, s, d, r_, lo, hi, rm
        in zip(xs, num, se, den, ratios, ci_lo, ci_hi, run))
    return RatioCurve(experiment_id, quantity.token, denominator.describe(),
                      points, float(predicted), semantics, float(tolerance),
                      verdict, used_samples, int(seed), tuple(notes))


def divergence_certificate(tau: CountingLaw, bound: float,
                           n_max: int = 10 ** 7) -> tuple:
    """Smallest N with Σ_{n<=N} n P(τ=n) > bound, plus the exact partial sum.

    The partial sum lower-bounds E τ, so exceeding the bound certifies that
    ratios normalized by a bare tail must eventually climb past it.
    """
    if not bound > 0:
        raise InvalidInput("bound must be positive")
    total = 0.0
    n = 0
    step = 1024
    while n < n_max:
        ks = np.arange(n + 1, min(n + step, n_max) + 1, dtype=np.int64)
        contrib = np.array([k * tau.pmf(int(k)) for k in ks])
        cum = total + np.cumsum(contrib)
        over = np.nonzero(cum > bound)[0]
        if len(over):
            i = int(over[0])
            return int(ks[i]), float(cum[i])
        total = float(cum[-1])
        n = int(ks[-1])
    raise AssumptionViolated(
        f"partial sums reach only {total:.6g} by N={n_max}; "
        f"cannot certify divergence past {bound}")


@dataclass(frozen=True)
class Claim:
    quantity: str
    semantics: str
    denominator: Denominator
    predicted: float = 1.0


@dataclass(frozen=True)
class Preset:
    theorem_id: str
    description: str
    build: object              # () -> DependentModel
    claims: tuple
    tolerance: float
    samples: int
    divergence_bound: float = 10.0
    check: object = None       # (model) -> tuple of hypothesis issues
    grid_n: int = 24
    grid_hi_u: float = 1.0 - 1e-4

    def hypothesis_issues(self, model) -> tuple:
        if self.check is None:
            return ()
        return tuple(self.check(model))


def _check_fgm_long(model):
    issues = []
    if not isinstance(model.copula, (FGM, Independence)):
        issues.append("copula is not of the bounded-density family")
    for m in model.marginals:
        if "L" not in m.tags:
            issues.append(f"{type(m).__name__} is not declared long-tailed")
    return issues


def _check_dominated(model):
    issues = list(_check_fgm_long(model))
    for m in model.marginals:
        if "D" not in m.tags:
            issues.append(
                f"{type(m).__name__} is not declared dominatedly varying")
        if m.support()[0] < 0:
            issues.append(f"{type(m).__name__} is not nonnegative")
    return issues


def _check_stopped_light(model):
    issues = []
    if model.tau is None:
        issues.append("no counting law")
    elif not math.isfinite(model.tau.mean()):
        issues.append("counting law must have a finite mean here")
    if not model.identical_marginals():
        issues.append("marginals must be identical")
    return issues


def _check_t44i(model):
    issues = list(_check_stopped_light(model))
    m = model.marginals[0]
    if m.mean() >= 0:
        issues.append("summand mean must be negative")
    if not isinstance(model.copula, Independence):
        issues.append("uniform density bound over all lengths needs "
                      "independent blocks")
    return issues


def _check_t44ii(model):
    issues = []
    if model.tau is None:
        issues.append("no counting law")
    if not model.identical_marginals():
        issues.append("marginals must be identical")
    m = model.marginals[0]
    if math.isfinite(m.mean()) and m.mean() < 0:
        issues.append("this variant assumes a nonnegative summand mean")
    if not isinstance(model.copula, Independence):
        issues.append("uniform density bound over all lengths needs "
                      "independent blocks")
    return issues


def _check_t42(model):
    issues = []
    if model.tau is None:
        issues.append("no counting law")
    elif math.isfinite(model.tau.mean()):
        issues.append("divergence needs an infinite-mean counting law")
    if not model.identical_marginals():
        issues.append("marginals must be identical")
    return issues


_SUM_TAILS = Denominator("sum_tails")
_MEAN_TAU = Denominator("mean_tau_tail")
_BARE_TAIL = Denominator("n_tail", n=1)


PRESETS = {
    "T3.1": Preset(
        "T3.1",
        "trivariate positive-dependence sum and running max against the sum "
        "of three power tails",
        lambda: DependentModel(
            FGM(3, (0.5, 0.5, 0.5)),
            (Pareto(0.8, 1.0), Pareto(0.8, 1.5), Pareto(0.8, 2.0))),
        (Claim("SumN", "lim", _SUM_TAILS), Claim("RunMaxN", "lim",
                                                 _SUM_TAILS)),
        tolerance=0.10, samples=2_000_000, check=_check_fgm_long),
    "T3.2": Preset(
        "T3.2",
        "bivariate dependent sum with mixed power indices: the running "
        "minimum of the ratio settles at one",
        lambda: DependentModel(FGM.bivariate(1.0),
                               (Pareto(0.8, 1.0), Pareto(1.2, 1.0))),
        (Claim("SumN", "liminf", _SUM_TAILS), Claim("RunMaxN", "liminf",
                                                    _SUM_TAILS)),
        tolerance=0.10, samples=1_000_000, check=_check_dominated),
    "T3.3": Preset(
        "T3.3",
        "bivariate dependent maximum, exact copula algebra: ratio to the "
        "tail sum tends to one",
        lambda: DependentModel(FGM.bivariate(1.0),
                               (Pareto(1.5, 1.0), Pareto(1.5, 1.0))),
        (Claim("MaxN", "lim", _SUM_TAILS),),
        tolerance=0.05, samples=1_000_000, check=_check_fgm_long),
    "C3.1": Preset(
        "C3.1",
        "identical heavy marginals under positive dependence: sum and "
        "running max both look like n copies of one tail",
        lambda: DependentModel(FGM.bivariate(1.0),
                               (Pareto(0.8, 1.0), Pareto(0.8, 1.0))),
        (Claim("SumN", "lim", Denominator("n_tail", n=2)),
         Claim("RunMaxN", "lim", Denominator("n_tail", n=2))),
        tolerance=0.075, samples=10_000_000, check=_check_fgm_long),
    "T4.1": Preset(
        "T4.1",
        "geometrically stopped sum of independent blocks: ratio to "
        "(expected count) x (one tail) tends to one",
        lambda: DependentModel(Independence(2),
                               (Pareto(0.8, 1.0), Pareto(0.8, 1.0)),
                               tau=Geometric1(0.5)),
        (Claim("SumTau", "lim", _MEAN_TAU),),
        tolerance=0.15, samples=10_000_000, check=_check_stopped_light),
    "T4.2": Preset(
        "T4.2",
        "infinite-mean stopping: ratios to the bare tail climb past any "
        "bound (certified by an exact partial sum)",
        lambda: DependentModel(Independence(2),
                               (Pareto(1.0, 1.0), Pareto(1.0, 1.0)),
                               tau=Zeta(1.5)),
        (Claim("MaxTau", "divergence", _BARE_TAIL),
         Claim("SumTau", "divergence", _BARE_TAIL)),
        tolerance=0.15, samples=200_000, divergence_bound=10.0,
        check=_check_t42),
    "T4.3": Preset(
        "T4.3",
        "randomly stopped maximum with a finite-mean count: ratio to "
        "(expected count) x (one tail) tends to one",
        lambda: DependentModel(FGM.bivariate(1.0),
                               (Pareto(1.5, 1.0), Pareto(1.5, 1.0)),
                               tau=Poisson(2.0)),
        (Claim("MaxTau", "lim", _MEAN_TAU),),
        tolerance=0.10, samples=1_000_000, check=_check_stopped_light),
    "T4.4i": Preset(
        "T4.4i",
        "negative-drift random walk stopped at an independent count: the "
        "running maximum's tail looks like (expected count) x (one tail); "
        "exceedances against the drift are rare events, so this preset "
        "carries the suite's widest tolerance",
        lambda: DependentModel(
            Independence(2),
            (ShiftedBy(Pareto(2.0, 1.0), -3.0),
             ShiftedBy(Pareto(2.0, 1.0), -3.0)),
            tau=Poisson(2.0)),
        (Claim("RunMaxTau", "lim", _MEAN_TAU),
         Claim("SumTau", "lim", _MEAN_TAU)),
        tolerance=0.20, samples=10_000_000, check=_check_t44i),
    "T4.4ii": Preset(
        "T4.4ii",
        "nonnegative-mean summands with a light-tailed count: same "
        "(expected count) x (one tail) asymptotics",
        lambda: DependentModel(Independence(2),
                               (Pareto(2.0, 1.0), Pareto(2.0, 1.0)),
                               tau=Poisson(2.0)),
        (Claim("RunMaxTau", "lim", _MEAN_TAU),
         Claim("SumTau", "lim", _MEAN_TAU)),
        tolerance=0.15, samples=4_000_000, check=_check_t44ii,
        grid_hi_u=1.0 - 1e-5),
}


def theorem_suite(theorem_id: str, model: DependentModel = None,
                  samples: int = None, seed: int = 0, workers: int = 1,
                  x_grid=None) -> list:
    """All ratio curves for one theorem preset (or a custom model on it)."""
    if theorem_id not in PRESETS:
        raise InvalidInput(
            f"unknown theorem id {theorem_id!r}; have {sorted(PRESETS)}")
    preset = PRESETS[theorem_id]
    custom = model is not None
    model = model if custom else preset.build()
    samples = preset.samples if samples is None else int(samples)
    notes = ()
    issues = preset.hypothesis_issues(model)
    if custom and issues:
        notes = ("hypotheses unverified: " + "; ".join(issues),)
    elif not custom and issues:
        raise ModelConfigError(
            f"preset {theorem_id} violates its own hypotheses: {issues}")
    if x_grid is None:
        x_grid = default_grid(model, preset.grid_n, hi_u=preset.grid_hi_u)
    curves = []
    many = len(preset.claims) > 1
    for claim in preset.claims:
        exp_id = (f"{theorem_id}:{claim.quantity}" if many else theorem_id)
        curves.append(run_experiment(
            model, claim.quantity, claim.denominator, x_grid=x_grid,
            samples=samples, seed=seed, workers=workers,
            predicted=claim.predicted, semantics=claim.semantics,
            tolerance=preset.tolerance, experiment_id=exp_id,
            divergence_bound=preset.divergence_bound, extra_notes=notes))
    return curves
