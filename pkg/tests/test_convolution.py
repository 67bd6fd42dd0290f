"""Convolution oracle tests: exact atom algebra, brackets, frozen regression constants.

The regression constants (5/4 running minimum, 383/256 late minimum, margin 3/4)
were derived by scripts/mixture_ratio_margin.py in exact rational arithmetic,
independently of the library code under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heavytails import convolution as cv
from heavytails.distributions import (
    DiscreteAtoms,
    Exponential,
    GeometricAtomMixture,
    Lognormal,
    Pareto,
    ShiftedBy,
    Weibull,
)
from heavytails.errors import InvalidInput, ResourceLimit
from heavytails.rng import substream


def measure(pairs, inf_mass=0.0):
    return cv.LatticeMeasure.from_atoms(pairs, inf_mass=inf_mass)


class TestLatticeMeasure:
    def test_rejects_unsorted(self):
        with pytest.raises(InvalidInput):
            cv.LatticeMeasure(np.array([1.0, 0.5]), np.array([0.5, 0.5]))

    def test_rejects_negative_mass(self):
        with pytest.raises(InvalidInput):
            cv.LatticeMeasure(np.array([0.0]), np.array([-0.1]))

    def test_rejects_duplicate_locations(self):
        with pytest.raises(InvalidInput):
            cv.LatticeMeasure(np.array([1.0, 1.0]), np.array([0.5, 0.5]))

    def test_tail_step_function(self):
        m = measure([(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)])
        lo, hi = m.tail_bounds(0.0)
        assert lo == hi == 0.75
        assert m.tail(1.0) == 0.25
        assert m.tail(2.0) == 0.0
        assert m.tail(-5.0) == 1.0

    def test_inf_bucket_counts_in_every_tail(self):
        m = measure([(0.0, 0.5)], inf_mass=0.5)
        assert m.tail(1e12) == 0.5
        assert m.tail(-1.0) == 1.0

    def test_slack_widens_bounds(self):
        m = cv.LatticeMeasure(np.array([0.0]), np.array([0.9]), slack=0.1)
        lo, hi = m.tail_bounds(0.5)
        assert lo == 0.0 and hi == pytest.approx(0.1)
        with pytest.raises(InvalidInput):
            m.tail(0.5)


class TestConvolveAtoms:
    def test_delta_identity(self):
        m = measure([(0.5, 0.25), (2.0, 0.75)])
        delta = measure([(0.0, 1.0)])
        out = cv.convolve_atoms(delta, m)
        np.testing.assert_array_equal(out.locs, m.locs)
        np.testing.assert_allclose(out.masses, m.masses, rtol=0, atol=0)

    def test_bernoulli_square(self):
        b = measure([(0.0, 0.5), (1.0, 0.5)])
        out = cv.convolve_atoms(b, b)
        np.testing.assert_array_equal(out.locs, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(out.masses, [0.25, 0.5, 0.25])

    def test_positive_part_pairs_against_double_loop(self):
        # twelve atoms of the dyadic positive part, self-convolved; the tail at
        # x = 63 must equal the brute-force sum over pairs exceeding it
        atoms = [(2.0 ** (n + 1) - 1.0, 2.0 ** -(n + 1)) for n in range(12)]
        m = measure(atoms)
        out = cv.convolve_atoms(m, m)
        for x in (63.0, 62.0, 127.0, 10.0):
            brute = sum(ma * mb
                        for la, ma in atoms for lb, mb in atoms if la + lb > x)
            assert out.tail(x) == pytest.approx(brute, rel=1e-14)

    def test_mass_conservation_single(self):
        rng = substream(2024, label=7)
        locs = np.sort(rng.uniform(-5, 5, size=400))
        masses = rng.uniform(0, 1, size=400)
        masses /= masses.sum()
        a = cv.LatticeMeasure(locs, masses)
        out = cv.convolve_atoms(a, a)
        assert abs(out.total() - a.total() ** 2) <= 1e-15

    def test_mass_conservation_64_folds(self):
        m = measure([(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)])
        out = cv.nfold_atoms(m, 64)
        assert abs(out.total() - 1.0) <= 1e-12
        # mean of the 64-fold sum is 64 by symmetry
        mean = float(np.sum(out.locs * out.masses))
        assert mean == pytest.approx(64.0, rel=1e-12)

    def test_overflow_bucket_algebra(self):
        a = measure([(0.0, 0.5)], inf_mass=0.5)
        b = measure([(1.0, 0.75)], inf_mass=0.25)
        out = cv.convolve_atoms(a, b)
        # bucket mass: 0.5*(0.75+0.25) + 0.25*0.5
        assert out.inf_mass == pytest.approx(0.625)
        assert out.total() == pytest.approx(1.0)

    def test_atom_cap_raises(self):
        locs = np.arange(3000, dtype=float)
        masses = np.full(3000, 1.0 / 3000)
        big = cv.LatticeMeasure(locs, masses)
        with pytest.raises(ResourceLimit):
            cv.convolve_atoms(big, big)

    def test_merge_tolerance(self):
        a = measure([(0.0, 0.5), (1.0, 0.5)])
        b = measure([(0.0, 0.5), (1.0 + 5e-13, 0.5)])
        out = cv.convolve_atoms(a, b)
        # 1.0 and 1.0+5e-13 merge into one atom
        assert len(out.locs) == 3
        assert out.masses[1] == pytest.approx(0.5)


@st.composite
def small_measures(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    locs = draw(st.lists(st.floats(min_value=-10, max_value=10,
                                   allow_nan=False, allow_infinity=False),
                         min_size=n, max_size=n, unique=True))
    masses = draw(st.lists(st.floats(min_value=1e-6, max_value=1.0),
                           min_size=n, max_size=n))
    total = sum(masses)
    return measure([(l, m / total) for l, m in zip(locs, masses)])


class TestConvolveProperties:
    @settings(max_examples=60, deadline=None)
    @given(a=small_measures(), b=small_measures())
    def test_commutative(self, a, b):
        ab = cv.convolve_atoms(a, b)
        ba = cv.convolve_atoms(b, a)
        np.testing.assert_allclose(ab.locs, ba.locs, rtol=0, atol=1e-12)
        np.testing.assert_allclose(ab.masses, ba.masses, rtol=0, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(a=small_measures(), b=small_measures(), c=small_measures())
    def test_associative_tails(self, a, b, c):
        # association order can flip a merge decision for atoms spaced within
        # a float rounding of the tolerance, moving an atom by ~1e-12; so the
        # comparison stays away from the atoms themselves
        left = cv.convolve_atoms(cv.convolve_atoms(a, b), c)
        right = cv.convolve_atoms(a, cv.convolve_atoms(b, c))
        probes = np.linspace(-30.0, 30.0, 13)
        all_locs = np.concatenate((left.locs, right.locs))
        if len(all_locs):
            dist = np.min(np.abs(probes[:, None] - all_locs[None, :]), axis=1)
            probes = probes[dist > 1e-9]
        lo_l, _ = left.tail_bounds(probes)
        lo_r, _ = right.tail_bounds(probes)
        np.testing.assert_allclose(lo_l, lo_r, atol=1e-11)
        assert abs(left.total() - right.total()) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(a=small_measures(), b=small_measures())
    def test_conservation_property(self, a, b):
        out = cv.convolve_atoms(a, b)
        assert abs(out.total() - a.total() * b.total()) <= 1e-14


class TestFrozenMixtureCurve:
    """Regression constants from the rational-arithmetic oracle."""

    def test_running_min_is_five_quarters(self):
        d = GeometricAtomMixture()
        curve = cv.exact_twofold_ratio_curve(d, 1.0, 2047.0)
        assert curve.final_min == 1.25
        i = int(np.argmin(curve.ratios))
        assert curve.xs[i] == 2.5
        # margin to the subexponential limit value 2
        assert 2.0 - curve.final_min == 0.75
        assert 2.0 - curve.final_min > 0.05

    def test_late_window_minimum(self):
        d = GeometricAtomMixture()
        curve = cv.exact_twofold_ratio_curve(d, 205.0, 2047.0)
        assert curve.final_min == 383.0 / 256.0

    def test_ratio_constant_on_flat_pieces(self):
        # both tails are flat strictly between atoms; the nearest jumps around
        # these probes are the pair atoms at 16 = 15+1 and 18 = 15+3
        d = GeometricAtomMixture()
        c = cv.exact_twofold_ratio_curve(d, 1.0, 2047.0,
                                         x_points=[16.2, 17.0, 17.9, 18.5])
        assert c.ratios[0] == c.ratios[1] == c.ratios[2]
        assert c.ratios[3] < c.ratios[2]

    def test_non_long_tail_witness(self):
        d = GeometricAtomMixture()
        for n in (3, 6, 10):
            t = 2.0 ** (n + 1) - 1.0
            assert d.tail(t) / d.tail(t - 1.0) == 0.5

    def test_pure_positive_part_against_brute_force(self):
        # sigma removed (q -> 1 limit): a pure dyadic-atom law; the exact curve
        # must match an independent pair enumeration slightly below 2*t_8
        depth = 24
        atoms = [(2.0 ** (n + 1) - 1.0, 2.0 ** -(n + 1)) for n in range(depth)]
        atoms.append((2.0 ** (depth + 1) - 1.0, 2.0 ** -depth))  # close the law
        d = DiscreteAtoms(atoms)
        x = 2.0 * 511.0 - 2.0  # just below twice the n=8 atom
        c = cv.exact_twofold_ratio_curve(d, x_points=[x])
        brute_num = sum(ma * mb
                        for la, ma in atoms for lb, mb in atoms if la + lb > x)
        brute_den = sum(m for l, m in atoms if l > x)
        assert c.numerators[0] == pytest.approx(brute_num, rel=1e-13)
        assert c.ratios[0] == pytest.approx(brute_num / brute_den, rel=1e-13)

    def test_requires_atomic_law(self):
        with pytest.raises(InvalidInput):
            cv.exact_twofold_ratio_curve(Exponential(1.0), 1.0, 10.0)


class TestTailBracket:
    def test_invariant_enforced(self):
        with pytest.raises(InvalidInput):
            cv.TailBracket(1.0, 0.5, 0.4)

    def test_width_and_midpoint(self):
        b = cv.TailBracket(1.0, 0.2, 0.4)
        assert b.width == pytest.approx(0.2)
        assert b.midpoint == pytest.approx(0.3)


class TestNfoldBracket:
    def test_exponential_twofold_contains_gamma(self):
        # Gamma(2,1) tail at 9 is (1+9)e^-9
        truth = 10.0 * math.exp(-9.0)
        (b,) = cv.nfold_tail_bracket(Exponential(1.0), 2, [9.0])
        assert b.lower <= truth <= b.upper
        assert b.width / truth < 0.02

    def test_exponential_threefold_contains_gamma(self):
        x = 12.0
        truth = (1.0 + x + x * x / 2.0) * math.exp(-x)
        (b,) = cv.nfold_tail_bracket(Exponential(1.0), 3, [x])
        assert b.lower <= truth <= b.upper

    def test_pareto_twofold_against_quadrature(self):
        # split on whether X2 > x-1 (then X1 >= 1 already pushes the sum past x):
        # P(S > x) = tail(x-1) + int_1^{x-1} f(y) tail(x-y) dy
        d = Pareto(1.5, 1.0)
        for x in (10.0, 50.0):
            part, _ = integrate.quad(
                lambda y: d.tail(x - y) * 1.5 * y ** -2.5, 1.0, x - 1.0)
            truth = part + d.tail(x - 1.0)
            (b,) = cv.nfold_tail_bracket(d, 2, [x], grid_step=x / 8192.0)
            assert b.lower <= truth <= b.upper

    def test_pareto_one_ratio_refines_toward_two(self):
        # independent two-fold of a unit-slope power tail: the refined bracket
        # pins midpoint/(2*tail) near 1, and the residual (of order log x / x)
        # shrinks as x grows
        d = Pareto(1.0, 1.0)
        offsets = []
        for x in (1000.0, 10000.0):
            widths = []
            for step in (x / 1024.0, x / 4096.0):
                (b,) = cv.nfold_tail_bracket(d, 2, [x], grid_step=step)
                widths.append(b.width)
            assert widths[1] <= widths[0] + 1e-15
            offsets.append(abs(b.midpoint / (2.0 * d.tail(x)) - 1.0))
            assert offsets[-1] < 0.02
        assert offsets[1] < offsets[0]

    def test_atomic_path_zero_width(self):
        d = GeometricAtomMixture()
        brs = cv.nfold_tail_bracket(d, 2, [10.0, 63.0, 500.0])
        for b in brs:
            assert b.width == 0.0

    def test_atomic_binomial_exact(self):
        d = DiscreteAtoms(((0.0, 0.5), (1.0, 0.5)))
        b15, b25 = cv.nfold_tail_bracket(d, 3, [1.5, 2.5])
        assert b15.lower == b15.upper == 0.5
        assert b25.lower == b25.upper == 0.125

    def test_monotone_refinement_never_widens(self):
        probes = [3.0, 6.0, 9.0]
        fams = [Exponential(1.0), Weibull(0.5, 1.0), Lognormal(0.0, 1.0),
                Pareto(1.5, 1.0)]
        for d in fams:
            prev = None
            for step in (0.05, 0.025, 0.0125):
                brs = cv.nfold_tail_bracket(d, 2, probes, grid_step=step)
                if prev is not None:
                    for old, new in zip(prev, brs):
                        assert new.width <= old.width + 1e-15
                        assert old.lower - 1e-15 <= new.lower
                        assert new.upper <= old.upper + 1e-15
                prev = brs

    def test_shifted_support_handled(self):
        d = ShiftedBy(Exponential(1.0), -2.0)
        truth = 10.0 * math.exp(-9.0)  # shift by -4 total: P(S+(-4) > 5) = Gamma tail at 9
        (b,) = cv.nfold_tail_bracket(d, 2, [5.0], grid_step=0.002)
        assert b.lower <= truth <= b.upper

    def test_bracket_contains_monte_carlo(self):
        # sampling cross-check on several built-in families
        cases = [
            (Exponential(1.0), 2, 6.0),
            (Pareto(1.5, 1.0), 2, 20.0),
            (Weibull(0.5, 1.0), 2, 15.0),
            (Lognormal(0.0, 1.0), 2, 10.0),
            (GeometricAtomMixture(), 2, 40.0),
        ]
        n_samples = 200_000
        for label, (d, n, x) in enumerate(cases):
            rng = substream(99, label=label)
            draws = d.sample(rng, n_samples * n).reshape(n_samples, n).sum(axis=1)
            p_hat = float(np.mean(draws > x))
            se = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / n_samples)
            (b,) = cv.nfold_tail_bracket(d, n, [x])
            assert b.lower - 4 * se <= p_hat <= b.upper + 4 * se, (
                f"{type(d).__name__}: mc={p_hat} bracket=({b.lower},{b.upper})")

    def test_rejects_n_zero(self):
        with pytest.raises(InvalidInput):
            cv.nfold_tail_bracket(Exponential(1.0), 0, [1.0])
