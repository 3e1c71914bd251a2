"""Aggregation and the frequency/mean estimation pipeline."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pckv.budget import PerturbProbs
from pckv.estimation import (
    Estimates,
    PrivKvCounts,
    SupportCounts,
    aggregate,
    aggregate_privkv,
    calibrate_counts,
    estimate_corrected,
    estimate_frequency,
    estimate_mean_baseline,
    estimate_privkv,
    merge_counts,
)
from pckv.mechanisms import GrrReport, PrivKvReport, UeReport

PROBS = PerturbProbs(0.5, 0.25, 0.75)


def running_example():
    # one real key, one dummy position; 300 plus and 100 minus reports
    return SupportCounts(n1=[300, 7], n2=[100, 5], n=1000, d=1)


class TestAggregate:
    def test_ue_tally(self):
        reports = [
            UeReport(bits=(1, -1, 0)),
            UeReport(bits=(1, 1, 0)),
            UeReport(bits=(0, -1, 1)),
        ]
        counts = aggregate(reports, d=2, d_prime=3)
        assert counts.n == 3 and counts.d == 2 and counts.d_prime == 3
        assert list(counts.n1) == [2, 1, 1]
        assert list(counts.n2) == [0, 2, 0]

    def test_grr_tally(self):
        reports = [
            GrrReport(1, 1),
            GrrReport(1, -1),
            GrrReport(3, 1),
            GrrReport(2, 1),
            GrrReport(1, 1),
        ]
        counts = aggregate(reports, d=2, d_prime=3)
        assert list(counts.n1) == [2, 1, 1]
        assert list(counts.n2) == [1, 0, 0]
        assert counts.n1.sum() + counts.n2.sum() == counts.n == 5

    def test_mixed_types_rejected(self):
        with pytest.raises(TypeError):
            aggregate([UeReport(bits=(1, 0, 0)), GrrReport(1, 1)], 2, 3)

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            aggregate([UeReport(bits=(1, 0))], d=2, d_prime=3)
        with pytest.raises(ValueError):
            aggregate([GrrReport(4, 1)], d=2, d_prime=3)

    def test_merge_matches_single_pass(self):
        reports = [UeReport(bits=(1, -1)), UeReport(bits=(0, 1)), UeReport(bits=(-1, -1))]
        whole = aggregate(reports, 1, 2)
        parts = merge_counts(aggregate(reports[:1], 1, 2), aggregate(reports[1:], 1, 2))
        assert np.array_equal(whole.n1, parts.n1)
        assert np.array_equal(whole.n2, parts.n2)
        assert whole.n == parts.n

    def test_merge_rejects_domain_mismatch(self):
        a = SupportCounts([1], [0], 1, 1)
        b = SupportCounts([1, 0], [0, 0], 1, 1)
        with pytest.raises(ValueError):
            merge_counts(a, b)


class TestFrequency:
    def test_worked_example(self):
        f = estimate_frequency(running_example(), PROBS, ell=1)
        assert f == pytest.approx([0.6], abs=1e-12)

    def test_ell_scales(self):
        f = estimate_frequency(running_example(), PROBS, ell=2)
        assert f == pytest.approx([1.2], abs=1e-12)

    def test_dummy_positions_on_request(self):
        f = estimate_frequency(running_example(), PROBS, ell=1, include_dummies=True)
        assert len(f) == 2

    def test_zero_support_goes_negative(self):
        counts = SupportCounts([0], [0], 100, 1)
        f = estimate_frequency(counts, PROBS, ell=1)
        assert f[0] == pytest.approx(-1.0, abs=1e-12)  # (0 - b)/(a - b)

    def test_requires_a_above_b(self):
        flat = PerturbProbs(0.25, 0.25, 0.75)
        with pytest.raises(ValueError):
            estimate_frequency(running_example(), flat, 1)


class TestMeanBaseline:
    def test_worked_example(self):
        m = estimate_mean_baseline(running_example(), PROBS)
        assert m == pytest.approx([4 / 3], abs=1e-12)

    def test_ell_cancels(self):
        one = estimate_mean_baseline(running_example(), PROBS, ell=1)
        five = estimate_mean_baseline(running_example(), PROBS, ell=5)
        assert one == pytest.approx(five, abs=1e-15)

    def test_degenerate_support_non_finite(self):
        # n1 + n2 equals the background expectation: denominator is zero
        counts = SupportCounts([150, 0], [100, 0], 1000, 1)
        m = estimate_mean_baseline(counts, PROBS)
        assert not np.isfinite(m[0])

    def test_requires_informative_p(self):
        with pytest.raises(ValueError):
            estimate_mean_baseline(running_example(), PerturbProbs(0.5, 0.25, 0.5))


class TestCalibration:
    def test_worked_example(self):
        nh1, nh2 = calibrate_counts(running_example(), PROBS)
        assert nh1 == pytest.approx([700.0], abs=1e-9)
        assert nh2 == pytest.approx([-100.0], abs=1e-9)

    def test_population_override(self):
        nh1, _ = calibrate_counts(running_example(), PROBS, n=2000)
        # background doubles: x1 = 300 - 250
        assert nh1 == pytest.approx([200.0], abs=1e-9)

    def test_singular_probs_rejected(self):
        with pytest.raises(ValueError):
            calibrate_counts(running_example(), PerturbProbs(0.5, 0.25, 0.5))

    @given(
        n1=st.integers(min_value=0, max_value=1000),
        n2=st.integers(min_value=0, max_value=1000),
        ell=st.integers(min_value=1, max_value=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_consistent_with_frequency(self, n1, n2, ell):
        """Summing calibrated counts recovers the raw frequency estimate."""
        counts = SupportCounts([n1], [n2], 2000, 1)
        nh1, nh2 = calibrate_counts(counts, PROBS)
        f = estimate_frequency(counts, PROBS, ell)
        assert ell * (nh1[0] + nh2[0]) / counts.n == pytest.approx(f[0], abs=1e-9)

    def test_round_trips_clean_counts(self):
        """Feeding exact expected counts back recovers the true split."""
        n, t1, t2 = 10_000, 1200, 300
        f = (t1 + t2) / n
        a, b, p = PROBS.a, PROBS.b, PROBS.p
        # expected +1 count: true +1 keep sign, true -1 flip, absents background
        e1 = t1 * a * p + t2 * a * (1 - p) + (n - t1 - t2) * b / 2
        e2 = t1 * a * (1 - p) + t2 * a * p + (n - t1 - t2) * b / 2
        counts = SupportCounts([e1], [e2], n, 1)
        nh1, nh2 = calibrate_counts(counts, PROBS)
        assert nh1[0] == pytest.approx(t1, abs=1e-6)
        assert nh2[0] == pytest.approx(t2, abs=1e-6)


class TestCorrected:
    def test_worked_example(self):
        est = estimate_corrected(running_example(), PROBS, ell=1)
        assert est.f_hat == pytest.approx([0.6], abs=1e-12)
        assert est.m_hat == pytest.approx([1.0], abs=1e-12)
        assert est.f_hat_raw == pytest.approx([0.6], abs=1e-12)
        assert est.m_hat_raw == pytest.approx([4 / 3], abs=1e-12)

    def test_zero_counts(self):
        counts = SupportCounts([0, 0], [0, 0], 1000, 2)
        est = estimate_corrected(counts, PROBS, ell=1)
        assert est.f_hat == pytest.approx([1e-3, 1e-3], abs=1e-15)
        assert est.m_hat == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_population_override_changes_background(self):
        est = estimate_corrected(running_example(), PROBS, ell=1, n=2000)
        assert est.n == 2000
        assert est.f_hat[0] == pytest.approx((0.2 - 0.25) / 0.25 + 1.0, abs=1.0)
        # raw value is negative at this population size; clipped to 1/n
        assert est.f_hat[0] == pytest.approx(1 / 2000, abs=1e-15)

    @given(
        n1=st.integers(min_value=0, max_value=500),
        n2=st.integers(min_value=0, max_value=500),
        ell=st.integers(min_value=1, max_value=4),
    )
    @settings(max_examples=80, deadline=None)
    def test_outputs_in_range(self, n1, n2, ell):
        counts = SupportCounts([n1], [n2], 500, 1)
        est = estimate_corrected(counts, PROBS, ell=ell)
        assert 1 / 500 <= est.f_hat[0] <= 1.0
        assert -1.0 <= est.m_hat[0] <= 1.0


class TestPrivKvEstimation:
    def test_aggregate(self):
        reports = [
            PrivKvReport(1, 1, 1),
            PrivKvReport(1, 1, -1),
            PrivKvReport(1, 0, 0),
            PrivKvReport(2, 1, 1),
        ]
        counts = aggregate_privkv(reports, d=2)
        assert list(counts.sampled) == [3, 1]
        assert list(counts.ones) == [2, 1]
        assert list(counts.pos) == [1, 1]
        assert list(counts.neg) == [1, 0]
        assert counts.n == 4

    def test_aggregate_rejects_foreign(self):
        with pytest.raises(TypeError):
            aggregate_privkv([GrrReport(1, 1)], d=2)

    def test_estimates(self):
        counts = PrivKvCounts(
            sampled=np.array([500, 500]),
            ones=np.array([400, 100]),
            pos=np.array([300, 100]),
            neg=np.array([100, 0]),
            n=1000,
            d=2,
        )
        est = estimate_privkv(counts, 0.75, 0.75)
        # key 1 raw freq (0.8 - 0.25)/0.5 = 1.1 -> clipped to 1
        assert est.f_hat_raw[0] == pytest.approx(1.1, abs=1e-12)
        assert est.f_hat[0] == 1.0
        assert est.m_hat[0] == pytest.approx(1.0, abs=1e-12)
        # key 2 raw freq negative -> floor at 1/n; raw mean 2 -> clipped
        assert est.f_hat[1] == pytest.approx(1e-3, abs=1e-15)
        assert est.m_hat_raw[1] == pytest.approx(2.0, abs=1e-12)
        assert est.m_hat[1] == 1.0

    def test_unsampled_key_defaults(self):
        counts = PrivKvCounts(
            sampled=np.array([4, 0]),
            ones=np.array([2, 0]),
            pos=np.array([2, 0]),
            neg=np.array([0, 0]),
            n=4,
            d=2,
        )
        est = estimate_privkv(counts, 0.75, 0.75)
        assert est.f_hat[1] == pytest.approx(0.25, abs=1e-15)  # 1/n floor
        assert est.m_hat[1] == 0.0

    def test_validates_probs(self):
        counts = aggregate_privkv([PrivKvReport(1, 1, 1)], d=1)
        with pytest.raises(ValueError):
            estimate_privkv(counts, 0.5, 0.75)
