"""Ratio-curve experiments: denominators, exact paths, verdicts, presets."""

import math

import numpy as np
import pytest

from heavytails import experiments as ex
from heavytails.copulas import Comonotone, DependentModel, FGM, Independence
from heavytails.counting import Geometric1, Poisson, Zeta
from heavytails.distributions import DiscreteAtoms, Pareto, ShiftedBy
from heavytails.errors import AssumptionViolated, InvalidInput


def pareto_pair(alpha, copula=None):
    cop = copula if copula is not None else FGM.bivariate(1.0)
    return DependentModel(cop, (Pareto(alpha, 1.0), Pareto(alpha, 1.0)))


class TestDenominators:
    def test_n_tail_three_copies(self):
        # 3 * (1/10) for a unit-scale power tail with index one
        assert ex.denom_n_tail(Pareto(1.0, 1.0), 3, 10.0) == pytest.approx(
            0.3, rel=1e-15)

    def test_n_tail_rejects_bad_n(self):
        with pytest.raises(InvalidInput):
            ex.denom_n_tail(Pareto(1.0, 1.0), 0, 10.0)

    def test_discounted_geometric_thresholds(self):
        # Five identical unit-index tails at thresholds x*1.05^k telescope
        # into x^{-1} * sum of 1.05^{-k}; check against the explicit sum.
        marginals = tuple(Pareto(1.0, 1.0) for _ in range(5))
        for x in (5.0, 50.0, 500.0):
            want = sum(1.05 ** -k for k in range(1, 6)) / x
            got = ex.denom_discounted(marginals, 0.05, x)
            assert got == pytest.approx(want, rel=1e-14)

    def test_discounted_rejects_rate_at_minus_one(self):
        with pytest.raises(InvalidInput):
            ex.denom_discounted((Pareto(1.0, 1.0),), -1.0, 5.0)

    def test_mean_tau_tail_geometric(self):
        f = Pareto(0.8, 1.0)
        x = 25.0
        assert ex.denom_mean_tau_tail(f, Geometric1(0.5), x) == 2.0 * f.tail(x)

    def test_mean_tau_tail_infinite_mean_flagged(self):
        with pytest.raises(AssumptionViolated):
            ex.denom_mean_tau_tail(Pareto(1.0, 1.0), Zeta(1.5), 10.0)

    def test_denominator_kind_validation(self):
        with pytest.raises(InvalidInput):
            ex.Denominator("geometric")
        with pytest.raises(InvalidInput):
            ex.Denominator("n_tail")
        with pytest.raises(InvalidInput):
            ex.Denominator("discounted")

    def test_sum_tails_values_match_marginals(self):
        model = DependentModel(FGM(3, (0.5, 0.5, 0.5)),
                               (Pareto(0.8, 1.0), Pareto(0.8, 1.5),
                                Pareto(0.8, 2.0)))
        xs = np.array([10.0, 100.0])
        got = ex.Denominator("sum_tails").values(model, xs)
        want = [sum(m.tail(x) for m in model.marginals) for x in xs]
        assert np.allclose(got, want, rtol=1e-15)


class TestComonotoneSumExact:
    """The two-copy comonotone sum doubles one coordinate, so its tail is
    the marginal tail at x/2 and the ratio to one tail is 2^alpha."""

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_dyadic_grid_bit_exact(self, alpha):
        model = pareto_pair(alpha, Comonotone(2))
        xs = np.array([4.0 ** k for k in range(1, 7)])
        curve = ex.run_experiment(
            model, "SumN", ex.Denominator("n_tail", n=1), x_grid=xs,
            numerator="exact", predicted=2.0 ** alpha, tolerance=1e-9,
            experiment_id="comonotone-double")
        assert np.all(curve.ratios == 2.0 ** alpha)
        assert curve.verdict == "consistent"
        assert all(p.stderr == 0.0 for p in curve.points)
        assert curve.samples == 0

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_arbitrary_grid_to_float_precision(self, alpha):
        model = pareto_pair(alpha, Comonotone(2))
        xs = np.geomspace(2.0, 1e6, 101)
        curve = ex.run_experiment(
            model, "SumN", ex.Denominator("n_tail", n=1), x_grid=xs,
            numerator="exact", predicted=2.0 ** alpha)
        np.testing.assert_allclose(curve.ratios, 2.0 ** alpha, rtol=5e-16)

    def test_exact_requires_identical_marginals(self):
        model = DependentModel(Comonotone(2),
                               (Pareto(1.0, 1.0), Pareto(2.0, 1.0)))
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", ex.Denominator("n_tail", n=1),
                              x_grid=np.array([8.0]), numerator="exact")


class TestExactMaxCurve:
    def test_bivariate_fgm_matches_closed_form(self):
        # 1 - C(u,u) over 2(1-u) with C(u,u) = u^2(1 + a(1-u)^2) reduces
        # to (1+u)/2 - a u^2 (1-u)/2. Verify the copula algebra path.
        curves = ex.theorem_suite("T3.3", seed=0)
        assert len(curves) == 1
        c = curves[0]
        f = Pareto(1.5, 1.0)
        u = np.array([1.0 - f.tail(p.x) for p in c.points])
        want = (1.0 + u) / 2.0 - u * u * (1.0 - u) / 2.0
        np.testing.assert_allclose(c.ratios, want, rtol=1e-10)
        assert c.verdict == "consistent"
        assert abs(c.ratios[-1] - 1.0) <= 6e-4

    def test_monotone_approach_over_last_decade(self):
        c = ex.theorem_suite("T3.3", seed=0)[0]
        xs = c.grid
        tail_idx = xs >= xs[-1] / 10.0
        assert np.all(np.diff(c.ratios[tail_idx]) >= 0.0)

    def test_exact_unavailable_for_stopped_quantities(self):
        model = DependentModel(Independence(2),
                               (Pareto(1.5, 1.0), Pareto(1.5, 1.0)),
                               tau=Poisson(2.0))
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumTau", ex.Denominator("mean_tau_tail"),
                              x_grid=np.array([10.0]), numerator="exact")

    def test_exact_unavailable_beyond_three_dims(self):
        model = DependentModel(Independence(4),
                               tuple(Pareto(1.5, 1.0) for _ in range(4)))
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "MaxN", ex.Denominator("sum_tails"),
                              x_grid=np.array([10.0]), numerator="exact")


class TestExactVersusMonteCarlo:
    def test_max_estimates_bracket_exact_curve(self):
        model = pareto_pair(1.5)
        xs = np.geomspace(3.0, 300.0, 8)
        den = ex.Denominator("sum_tails")
        exact = ex.run_experiment(model, "MaxN", den, x_grid=xs,
                                  numerator="exact")
        mc = ex.run_experiment(model, "MaxN", den, x_grid=xs, numerator="mc",
                               samples=200_000, seed=5)
        for pe, pm in zip(exact.points, mc.points):
            slack = 4.0 * max(pm.stderr, 1e-12)
            assert abs(pm.numerator - pe.numerator) <= slack

    def test_comonotone_sum_estimates_bracket_exact_curve(self):
        model = pareto_pair(1.0, Comonotone(2))
        xs = np.geomspace(4.0, 1e4, 5)
        den = ex.Denominator("n_tail", n=1)
        exact = ex.run_experiment(model, "SumN", den, x_grid=xs,
                                  numerator="exact")
        mc = ex.run_experiment(model, "SumN", den, x_grid=xs, numerator="mc",
                               samples=100_000, seed=6)
        for pe, pm in zip(exact.points, mc.points):
            assert abs(pm.numerator - pe.numerator) <= 4.0 * max(pm.stderr,
                                                                 1e-12)


class TestVerdictSemantics:
    """Graded on exact constant curves, so the outcomes are deterministic."""

    def _constant_two_curve(self, **kw):
        model = pareto_pair(1.0, Comonotone(2))
        xs = np.array([4.0 ** k for k in range(1, 7)])
        return ex.run_experiment(model, "SumN",
                                 ex.Denominator("n_tail", n=1), x_grid=xs,
                                 numerator="exact", **kw)

    def test_lim_consistent_at_true_limit(self):
        c = self._constant_two_curve(predicted=2.0, tolerance=0.05)
        assert c.verdict == "consistent"

    def test_lim_inconsistent_at_wrong_limit(self):
        c = self._constant_two_curve(predicted=1.0, tolerance=0.05)
        assert c.verdict == "inconsistent"

    def test_liminf_consistent(self):
        c = self._constant_two_curve(predicted=2.0, tolerance=0.05,
                                     semantics="liminf")
        assert c.verdict == "consistent"

    def test_liminf_inconsistent_when_curve_dips_below(self):
        c = self._constant_two_curve(predicted=3.0, tolerance=0.05,
                                     semantics="liminf")
        assert c.verdict == "inconsistent"

    def test_liminf_inconclusive_without_witness(self):
        # The curve never comes near 1.5 from above, so a liminf of 1.5 is
        # neither witnessed nor contradicted.
        c = self._constant_two_curve(predicted=1.5, tolerance=0.05,
                                     semantics="liminf")
        assert c.verdict == "inconclusive"

    def test_divergence_consistent_past_bound(self):
        c = self._constant_two_curve(semantics="divergence",
                                     divergence_bound=1.5)
        assert c.verdict == "consistent"
        assert math.isinf(c.predicted_limit)

    def test_divergence_inconsistent_below_bound(self):
        c = self._constant_two_curve(semantics="divergence",
                                     divergence_bound=10.0)
        assert c.verdict == "inconsistent"

    def test_running_min_tracks_cumulative_minimum(self):
        curves = ex.theorem_suite("T3.3", seed=0)
        c = curves[0]
        rm = np.minimum.accumulate(c.ratios)
        assert np.allclose([p.running_min for p in c.points], rm, rtol=0)

    def test_bad_arguments_rejected(self):
        model = pareto_pair(1.0, Comonotone(2))
        xs = np.array([4.0, 16.0])
        den = ex.Denominator("n_tail", n=1)
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", den, x_grid=xs,
                              semantics="limsup")
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", den, x_grid=xs,
                              numerator="guess")
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", den, x_grid=xs, tolerance=0.0)
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", den,
                              x_grid=np.array([16.0, 4.0]))

    def test_vanishing_denominator_rejected(self):
        atoms = DiscreteAtoms(((1.0, 0.5), (2.0, 0.5)))
        model = DependentModel(Independence(2), (atoms, atoms))
        with pytest.raises(InvalidInput):
            ex.run_experiment(model, "SumN", ex.Denominator("n_tail", n=1),
                              x_grid=np.array([5.0]), samples=1000)


class TestSampleSizeGate:
    def test_starved_run_is_inconclusive_with_advice(self):
        model = pareto_pair(0.8)
        xs = np.geomspace(10.0, 1e5, 8)
        c = ex.run_experiment(model, "SumN", ex.Denominator("n_tail", n=2),
                              x_grid=xs, samples=2000, seed=3)
        assert c.verdict == "inconclusive"
        assert any("samples" in n for n in c.notes)


class TestPathwiseOrdering:
    def test_sum_ratio_below_running_max_ratio(self):
        model = pareto_pair(0.8)
        xs = np.geomspace(10.0, 1e4, 6)
        den = ex.Denominator("n_tail", n=2)
        c_sum = ex.run_experiment(model, "SumN", den, x_grid=xs,
                                  samples=100_000, seed=9)
        c_run = ex.run_experiment(model, "RunMaxN", den, x_grid=xs,
                                  samples=100_000, seed=9)
        assert np.all(c_sum.ratios <= c_run.ratios)


class TestVerdictStability:
    def test_doubling_samples_keeps_verdicts(self):
        model = pareto_pair(0.8)
        xs = np.geomspace(10.0, 1e4, 12)
        den = ex.Denominator("n_tail", n=2)
        for seed in (3, 4, 5):
            v1 = ex.run_experiment(model, "SumN", den, x_grid=xs,
                                   samples=300_000, seed=seed,
                                   tolerance=0.1).verdict
            v2 = ex.run_experiment(model, "SumN", den, x_grid=xs,
                                   samples=600_000, seed=seed,
                                   tolerance=0.1).verdict
            assert v1 == v2 == "consistent"


class TestTheoremSuite:
    def test_registry_ids(self):
        assert set(ex.PRESETS) == {"T3.1", "T3.2", "T3.3", "C3.1", "T4.1",
                                   "T4.2", "T4.3", "T4.4i", "T4.4ii"}

    def test_unknown_id_rejected(self):
        with pytest.raises(InvalidInput):
            ex.theorem_suite("T9.9")

    def test_presets_satisfy_their_own_hypotheses(self):
        for tid, preset in ex.PRESETS.items():
            assert preset.hypothesis_issues(preset.build()) == (), tid

    def test_single_claim_uses_bare_id(self):
        c = ex.theorem_suite("T4.1", samples=50_000, seed=11)
        assert len(c) == 1 and c[0].experiment_id == "T4.1"

    def test_multi_claim_ids_carry_quantity(self):
        curves = ex.theorem_suite("T3.2", samples=50_000, seed=11)
        assert [c.experiment_id for c in curves] == ["T3.2:SumN",
                                                     "T3.2:RunMaxN"]

    def test_reduced_sample_run_consistent(self):
        c = ex.theorem_suite("T4.1", samples=200_000, seed=11)[0]
        assert c.verdict == "consistent"
        assert c.semantics == "lim"
        assert c.denominator == "mean_tau_tail"

    def test_custom_model_violating_hypotheses_is_stamped(self):
        bad = DependentModel(Independence(2),
                             (Pareto(2.0, 1.0), Pareto(2.0, 1.0)),
                             tau=Poisson(2.0))
        curves = ex.theorem_suite("T4.4i", model=bad, samples=20_000, seed=2)
        for c in curves:
            assert any(n.startswith("hypotheses unverified") for n in c.notes)
            assert any("mean" in n for n in c.notes)

    def test_custom_model_meeting_hypotheses_not_stamped(self):
        ok = DependentModel(Independence(2),
                            (Pareto(0.8, 1.0), Pareto(0.8, 1.0)),
                            tau=Geometric1(0.7))
        c = ex.theorem_suite("T4.1", model=ok, samples=20_000, seed=2)[0]
        assert not any(n.startswith("hypotheses unverified") for n in c.notes)


class TestDivergenceCertificate:
    def test_zeta_partial_sum_crosses_ten(self):
        n, s = ex.divergence_certificate(Zeta(1.5), 10.0)
        assert n == 190
        assert 10.0 < s < 10.1

    def test_finite_mean_law_cannot_certify(self):
        with pytest.raises(AssumptionViolated):
            ex.divergence_certificate(Geometric1(0.5), 10.0, n_max=5000)

    def test_poisson_certifies_below_its_mean(self):
        n, s = ex.divergence_certificate(Poisson(2.0), 1.9)
        assert s > 1.9 and n < 50

    def test_bound_must_be_positive(self):
        with pytest.raises(InvalidInput):
            ex.divergence_certificate(Zeta(1.5), 0.0)


class TestDefaultGrid:
    def test_spans_marginal_tail_quantiles(self):
        model = DependentModel(FGM.bivariate(1.0),
                               (Pareto(0.8, 1.0), Pareto(1.2, 1.0)))
        xs = ex.default_grid(model)
        assert len(xs) == 24
        assert xs[0] == pytest.approx(Pareto(0.8, 1.0).quantile(0.9),
                                      rel=1e-12)
        assert xs[-1] == pytest.approx(Pareto(0.8, 1.0).quantile(1 - 1e-4),
                                       rel=1e-12)
