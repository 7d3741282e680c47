"""Confidence intervals, tests, bootstrap and the per-site protein test."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp, norm

from gwlimits.errors import DegenerateSample, InvalidInput, NearNullDegenerate
from gwlimits.gw import GaussianMeasure, gw2, sample_gaussian
from gwlimits.harness import P_REF, Q_REF
from gwlimits.inference import (
    REJECT,
    RETAIN,
    SKIPPED,
    Site,
    bootstrap_m_of_n,
    bootstrap_n_of_n,
    ci_one_sample,
    ci_two_sample,
    default_m,
    protein_batch_test,
    test_equality as equality_test,
    test_neighborhood as neighborhood_test,
)
from gwlimits.limitlaw import ONE_SAMPLE, one_sample_variance, sample_limit_null
from gwlimits.rng import make_rng

TRUE = gw2(P_REF, Q_REF)


class TestIntervals:
    def test_coverage(self):
        r = make_rng(100)
        reps, n = 400, 500
        hits = sum(ci_one_sample(sample_gaussian(P_REF, n, r), Q_REF).contains(TRUE) for _ in range(reps))
        se = math.sqrt(0.95 * 0.05 / reps)
        assert abs(hits / reps - 0.95) <= 3 * se

    def test_two_sample_coverage(self):
        r = make_rng(101)
        reps, n, m = 300, 400, 600
        hits = sum(
            ci_two_sample(sample_gaussian(P_REF, n, r), sample_gaussian(Q_REF, m, r)).contains(TRUE) for _ in range(reps)
        )
        se = math.sqrt(0.95 * 0.05 / reps)
        assert abs(hits / reps - 0.95) <= 3 * se

    def test_width_scales_with_root_n(self):
        r = make_rng(102)
        w1 = np.mean([ci_one_sample(sample_gaussian(P_REF, 1000, r), Q_REF).width for _ in range(50)])
        w4 = np.mean([ci_one_sample(sample_gaussian(P_REF, 4000, r), Q_REF).width for _ in range(50)])
        assert w1 / w4 == pytest.approx(2.0, rel=0.05)

    def test_alpha_one_is_a_point(self, rng):
        ci = ci_one_sample(sample_gaussian(P_REF, 200, rng), Q_REF, alpha=1.0)
        assert ci.lower == ci.upper == ci.estimate

    def test_nonnegative_and_contains_estimate(self, rng):
        x = sample_gaussian(Q_REF, 50, rng)
        ci = ci_one_sample(x, GaussianMeasure(Q_REF.mean + 0.01, Q_REF.cov))
        assert 0.0 <= ci.lower <= ci.estimate <= ci.upper

    def test_two_sample_symmetric_when_equal_sizes(self, rng):
        x, y = sample_gaussian(P_REF, 300, rng), sample_gaussian(Q_REF, 300, rng)
        a, b = ci_two_sample(x, y), ci_two_sample(y, x)
        assert a.lower == pytest.approx(b.lower, rel=1e-10)
        assert a.upper == pytest.approx(b.upper, rel=1e-10)

    def test_near_null(self, rng):
        x = sample_gaussian(P_REF, 200, rng)
        from gwlimits.gw import empirical_gaussian

        with pytest.raises(NearNullDegenerate):
            ci_one_sample(x, empirical_gaussian(x))

    def test_bad_alpha(self, rng):
        with pytest.raises(InvalidInput):
            ci_one_sample(sample_gaussian(P_REF, 20, rng), Q_REF, alpha=0.0)


class TestEquality:
    def test_forced_zero_is_retained(self, rng):
        x = sample_gaussian(P_REF, 100, rng)
        y = x.copy()
        rep = equality_test(x, y=y, null_draws=2000, rng=rng)
        assert rep.statistic == 0.0
        assert rep.decision == RETAIN

    def test_detects_shift(self, rng):
        x = sample_gaussian(P_REF, 500, rng)
        assert equality_test(x, ref=Q_REF, null_draws=5000, rng=rng).decision == REJECT
        y = sample_gaussian(Q_REF, 300, rng)
        assert equality_test(x, y=y, null_draws=5000, rng=rng).decision == REJECT

    def test_needs_one_reference(self, rng):
        x = sample_gaussian(P_REF, 30, rng)
        with pytest.raises(InvalidInput):
            equality_test(x, null_draws=2000)
        with pytest.raises(InvalidInput):
            equality_test(x, ref=P_REF, y=x, null_draws=2000)

    def test_size_small_run(self):
        r = make_rng(103)
        P = GaussianMeasure([0.0, 0.0], [[2.0, 0.5], [0.5, 1.0]])
        law = sample_limit_null(P, ONE_SAMPLE, 20_000, make_rng(104))
        reps = 300
        rejections = sum(equality_test(sample_gaussian(P, 400, r), ref=P, null_law=law).rejected for _ in range(reps))
        assert abs(rejections / reps - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / reps)

    def test_p_value_in_unit_interval(self, rng):
        rep = equality_test(sample_gaussian(P_REF, 100, rng), ref=P_REF, null_draws=2000, rng=rng)
        assert 0.0 <= rep.p_value <= 1.0
        assert rep.rejected == (rep.decision == REJECT)


class TestNeighborhood:
    def test_reject_far_inside(self, rng):
        x = sample_gaussian(P_REF, 2000, rng)
        rep = neighborhood_test(x, Q_REF, delta=3 * TRUE)
        assert rep.decision == REJECT
        assert rep.p_value < 0.05

    def test_retain_at_boundary(self, rng):
        x = sample_gaussian(P_REF, 2000, rng)
        assert neighborhood_test(x, Q_REF, delta=0.5 * TRUE).decision == RETAIN

    def test_boundary_size(self):
        r = make_rng(105)
        reps = 400
        rej = sum(neighborhood_test(sample_gaussian(P_REF, 1000, r), Q_REF, delta=TRUE).rejected for _ in range(reps))
        assert abs(rej / reps - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / reps)

    def test_p_value_monotone_in_delta(self, rng):
        x = sample_gaussian(P_REF, 500, rng)
        ps = [neighborhood_test(x, Q_REF, delta=d).p_value for d in np.linspace(0.5, 3.0, 8)]
        assert np.all(np.diff(ps) <= 0)

    @settings(max_examples=20)
    @given(st.floats(0.02, 0.4), st.floats(0.3, 4.0))
    def test_duality_with_interval(self, alpha, delta):
        # rejecting at level alpha is the same as the upper one-sided bound lying below delta
        x = sample_gaussian(P_REF, 300, make_rng(106))
        rep = neighborhood_test(x, Q_REF, delta=delta, alpha=alpha)
        ci = ci_one_sample(x, Q_REF, alpha=2 * alpha)
        upper = ci.estimate + norm.ppf(1 - alpha) * ci.std_error
        if abs(upper - delta) > 1e-9:
            assert rep.rejected == (upper < delta)

    def test_bad_delta(self, rng):
        with pytest.raises(InvalidInput):
            neighborhood_test(sample_gaussian(P_REF, 30, rng), Q_REF, delta=0.0)


class TestBootstrap:
    def test_default_m(self):
        assert default_m(5000) == 293
        assert default_m(1000) == 100

    def test_m_must_be_smaller(self, rng):
        x = sample_gaussian(P_REF, 50, rng)
        with pytest.raises(InvalidInput):
            bootstrap_m_of_n(x, Q_REF, m=50, B=10, rng=rng)

    def test_reproducible(self, rng):
        x = sample_gaussian(P_REF, 200, rng)
        a = bootstrap_n_of_n(x, Q_REF, B=200, rng=make_rng(7)).replicates
        b = bootstrap_n_of_n(x, Q_REF, B=200, rng=make_rng(7)).replicates
        np.testing.assert_array_equal(a, b)

    def test_translation_invariance(self, rng):
        x = sample_gaussian(P_REF, 200, rng)
        shift = np.array([3.0, -1.0])
        a = bootstrap_n_of_n(x, Q_REF, B=200, rng=make_rng(8)).replicates
        b = bootstrap_n_of_n(x + shift, GaussianMeasure(Q_REF.mean + shift, Q_REF.cov), B=200, rng=make_rng(8)).replicates
        np.testing.assert_allclose(a, b, atol=1e-8)

    def test_spread_matches_variance(self):
        x = sample_gaussian(P_REF, 2000, make_rng(109))
        bs = bootstrap_n_of_n(x, Q_REF, B=2000, rng=make_rng(110))
        assert bs.replicates.std() == pytest.approx(math.sqrt(one_sample_variance(P_REF, Q_REF)), rel=0.1)

    def test_m_of_n_tracks_null_law(self):
        P = GaussianMeasure.standard(2)
        x = sample_gaussian(P, 5000, make_rng(111))
        bs = bootstrap_m_of_n(x, P, B=2000, rng=make_rng(112))
        law = sample_limit_null(P, ONE_SAMPLE, 20_000, make_rng(113))
        assert bs.m == 293
        assert ks_2samp(bs.replicates, law.draws).statistic < 0.06

    def test_degenerate_resamples(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 1.0]] + [[1.0, 1.0]] * 20)
        with pytest.raises(DegenerateSample):
            bootstrap_n_of_n(x, P_REF, B=200, rng=make_rng(1))


def _site(rng, n, shift=0.0, b=2.0, name=""):
    ref = rng.normal(size=3) * 5
    x = sample_gaussian(GaussianMeasure(ref + shift * math.sqrt(b), b * np.eye(3)), n, rng)
    return Site(x, ref, b, name)


class TestProtein:
    def test_shifted_site_rejected(self, rng):
        sites = [_site(rng, 100, name="a"), _site(rng, 100, shift=10.0, name="b")]
        reports = protein_batch_test(sites, null_draws=5000, rng=rng)
        assert reports[1].decision == REJECT
        assert reports[1].nuisance["site"] == "b"

    def test_degenerate_site_skipped(self, rng):
        flat = np.zeros((10, 3))
        flat[:, 0] = np.arange(10)
        reports = protein_batch_test([Site(flat, np.zeros(3), 1.0), Site(np.ones((2, 3)), np.zeros(3), 1.0)], null_draws=2000, rng=rng)
        assert [r.decision for r in reports] == [SKIPPED, SKIPPED]

    def test_calibration(self):
        r = make_rng(114)
        law = sample_limit_null(GaussianMeasure.standard(3), ONE_SAMPLE, 20_000, make_rng(115))
        sites = [_site(r, int(r.integers(10, 200)), b=float(r.uniform(0.5, 5))) for _ in range(600)]
        rate = np.mean([rep.rejected for rep in protein_batch_test(sites, null_law=law)])
        assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / 600) + 0.01

    def test_bad_input(self, rng):
        with pytest.raises(InvalidInput):
            protein_batch_test([Site(np.ones((10, 2)), np.zeros(2), 1.0)], null_draws=2000, rng=rng)
        with pytest.raises(InvalidInput):
            protein_batch_test([Site(np.ones((20, 3)), np.zeros(3), -1.0)], null_draws=2000, rng=rng)
