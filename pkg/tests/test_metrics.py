import math

import numpy as np
import pytest

from faircascade import metrics
from faircascade.errors import UndefinedDistributionError
from faircascade.metrics import ExposureLedger, ExposureNotion


def pairwise_gini(values):
    """Mean-absolute-pairwise-difference oracle: sum|xi-xj| / (2 m^2 mean)."""
    x = np.asarray(values, dtype=np.float64)
    diffs = np.abs(x[:, None] - x[None, :]).sum()
    return float(diffs / (2 * x.size**2 * x.mean()))


class TestGini:
    def test_uniform_is_exactly_zero(self):
        assert metrics.gini([1.0, 1.0, 1.0, 1.0]) == 0.0
        assert metrics.gini(np.full(137, 0.31)) == 0.0

    def test_one_hot_m4_is_exactly_three_quarters(self):
        assert metrics.gini([0.0, 0.0, 0.0, 1.0]) == 0.75

    def test_one_hot_general(self):
        for m in (2, 3, 5, 8, 100):
            one_hot = np.zeros(m)
            one_hot[m // 2] = 3.7
            assert metrics.gini(one_hot) == pytest.approx((m - 1) / m, abs=1e-14)

    def test_scale_invariance(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0, 5, size=40)
        base = metrics.gini(x)
        for c in (0.001, 2.0, 1e6):
            assert metrics.gini(c * x) == pytest.approx(base, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(0, 1, size=25)
        assert metrics.gini(x) == metrics.gini(x[rng.permutation(25)])

    def test_agrees_with_pairwise_oracle(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            m = int(rng.integers(2, 1000))
            x = rng.uniform(0, 10, size=m)
            x[rng.random(m) < 0.3] = 0.0
            if x.sum() == 0:
                x[0] = 1.0
            assert metrics.gini(x) == pytest.approx(pairwise_gini(x), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            m = int(rng.integers(2, 200))
            x = rng.uniform(0, 1, size=m)
            g = metrics.gini(x)
            assert 0.0 <= g <= (m - 1) / m + 1e-12

    def test_all_zero_raises(self):
        with pytest.raises(UndefinedDistributionError):
            metrics.gini(np.zeros(5))

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            metrics.gini([-1.0, 2.0])


class TestExposureLedger:
    def test_position_discounts(self):
        ledger = ExposureLedger(5, 3)
        ledger.record_list(np.array([4, 0, 2]))
        e_p = ledger.position_exposure()
        assert e_p[4] == pytest.approx(1.0)          # 1/log2(2)
        assert e_p[0] == pytest.approx(1.0 / math.log2(3))
        assert e_p[2] == pytest.approx(0.5)          # 1/log2(4)

    def test_binary_exposure_counts_lists(self):
        ledger = ExposureLedger(6, 5)
        for start in range(3):
            ledger.record_list(np.arange(start, start + 5) % 6)
        assert ledger.binary_exposure().sum() == 15
        assert ledger.lists_recorded == 3

    def test_position_exposure_sum_per_list(self):
        k = 5
        ledger = ExposureLedger(10, k)
        ledger.record_list(np.array([9, 3, 5, 0, 7]))
        expected = metrics.position_discounts(k).sum()
        assert ledger.position_exposure().sum() == pytest.approx(expected)

    def test_merge_is_order_independent(self):
        rng = np.random.default_rng(17)
        parts = []
        for _ in range(4):
            part = ExposureLedger(8, 3)
            for _ in range(10):
                part.record_list(rng.permutation(8)[:3].astype(np.int64))
            parts.append(part)
        forward = ExposureLedger(8, 3)
        backward = ExposureLedger(8, 3)
        for part in parts:
            forward.merge(part)
        for part in reversed(parts):
            backward.merge(part)
        np.testing.assert_array_equal(forward.position_counts, backward.position_counts)
        np.testing.assert_array_equal(
            forward.position_exposure(), backward.position_exposure()
        )

    def test_rejects_wrong_length(self):
        ledger = ExposureLedger(5, 3)
        with pytest.raises(ValueError):
            ledger.record_list(np.array([0, 1]))


class TestExposureDistribution:
    def test_binary_merit_view(self):
        ledger = ExposureLedger(2, 1, merit=np.array([0.5, 1.0]))
        ledger.record_list(np.array([0]))
        ledger.record_list(np.array([0]))
        np.testing.assert_allclose(
            metrics.exposure_distribution(ledger, ExposureNotion.BINARY_MERIT), [4.0, 0.0]
        )

    def test_fresh_ledger_all_zero(self):
        ledger = ExposureLedger(4, 2, merit=np.ones(4))
        for notion in ExposureNotion:
            np.testing.assert_array_equal(
                metrics.exposure_distribution(ledger, notion), np.zeros(4)
            )

    def test_position_merit_matches_elementwise_division(self):
        rng = np.random.default_rng(19)
        merit = rng.uniform(0.1, 2.0, size=7)
        ledger = ExposureLedger(7, 3, merit=merit)
        for _ in range(20):
            ledger.record_list(rng.permutation(7)[:3].astype(np.int64))
        pm = metrics.exposure_distribution(ledger, ExposureNotion.POSITION_MERIT)
        e_p = ledger.position_exposure()
        oracle = np.array([e_p[i] / merit[i] for i in range(7)])
        np.testing.assert_allclose(pm, oracle, rtol=1e-15)

    def test_merit_views_need_merit(self):
        ledger = ExposureLedger(3, 2)
        with pytest.raises(ValueError):
            metrics.exposure_distribution(ledger, ExposureNotion.BINARY_MERIT)


class TestFairness:
    def test_uniform_exposure_is_fairest(self):
        ledger = ExposureLedger(4, 4, merit=np.ones(4))
        ledger.record_list(np.array([0, 1, 2, 3]))
        assert metrics.fairness(ledger, ExposureNotion.BINARY) == 1.0

    def test_single_item_exposure(self):
        ledger = ExposureLedger(4, 1, merit=np.ones(4))
        ledger.record_list(np.array([2]))
        assert metrics.fairness(ledger, ExposureNotion.BINARY) == pytest.approx(0.25)

    def test_fresh_ledger_raises(self):
        ledger = ExposureLedger(4, 2, merit=np.ones(4))
        with pytest.raises(UndefinedDistributionError):
            metrics.fairness(ledger, ExposureNotion.POSITION)


class TestAvgClicks:
    def test_zero(self):
        assert metrics.avg_clicks(0, 10, 10) == 0.0

    def test_every_round_clicked(self):
        assert metrics.avg_clicks(100, 10, 10) == 1.0

    def test_half(self):
        assert metrics.avg_clicks(50, 10, 10) == 0.5

    def test_rejects_zero_denominator(self):
        with pytest.raises(ValueError):
            metrics.avg_clicks(1, 0, 5)


class TestRegretStep:
    def test_no_gap(self):
        assert metrics.regret_step(1.0, 1.0) == 0.0

    def test_full_gap(self):
        assert metrics.regret_step(1.0, 0.0) == 1.0

    def test_clamped_at_zero(self):
        assert metrics.regret_step(0.0, 1.0) == 0.0


class TestAlphaCondition:
    def test_minimal_configuration(self):
        expected = math.sqrt(math.log(2)) + 1.0
        value = metrics.alpha_condition(1.0, 1, 1, 1, 1.0)
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(1.8326, abs=1e-4)

    def test_increasing_in_rounds(self):
        values = [metrics.alpha_condition(1.0, 5, n, 4, 1.0) for n in (10, 100, 1000)]
        assert values[0] < values[1] < values[2]

    def test_larger_sigma_shrinks_first_term(self):
        theta = 0.0
        assert metrics.alpha_condition(2.0, 5, 100, 4, theta) < metrics.alpha_condition(
            1.0, 5, 100, 4, theta
        )


class TestRegretBound:
    def test_minimal_configuration(self):
        alpha = math.sqrt(math.log(2)) + 1.0
        expected = 2 * alpha + 1.0
        value = metrics.regret_bound(alpha, 1, 1, 1, 1.0)
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(4.665, abs=1e-3)

    def test_zero_rounds_limit(self):
        assert metrics.regret_bound(2.0, 5, 10, 0, 1.0) == 1.0

    def test_linear_in_list_size(self):
        base = metrics.regret_bound(1.0, 5, 10, 1000, 1.0)
        double = metrics.regret_bound(1.0, 10, 10, 1000, 1.0)
        # doubling K doubles the sqrt term's K factor and the nK inside the
        # log, so the growth is a bit above 2x on the first term
        assert (double - 1.0) > 2.0 * (base - 1.0)

    def test_monotone_in_each_argument(self):
        base = metrics.regret_bound(1.0, 5, 10, 1000, 1.0)
        assert metrics.regret_bound(2.0, 5, 10, 1000, 1.0) > base
        assert metrics.regret_bound(1.0, 6, 10, 1000, 1.0) > base
        assert metrics.regret_bound(1.0, 5, 11, 1000, 1.0) > base
        assert metrics.regret_bound(1.0, 5, 10, 2000, 1.0) > base


class TestDeltaExposure:
    def test_formula(self):
        out = metrics.delta_exposure(np.array([2.0]), np.array([1.0]))
        assert out[0] == pytest.approx(200.0 / 3.0)

    def test_equal_exposure(self):
        out = metrics.delta_exposure(np.array([3.0]), np.array([3.0]))
        assert out[0] == 0.0

    def test_ceiling_when_base_is_zero(self):
        out = metrics.delta_exposure(np.array([5.0]), np.array([0.0]))
        assert out[0] == pytest.approx(200.0)

    def test_both_zero_reports_zero(self):
        out = metrics.delta_exposure(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0])


class TestMeanExploration:
    def test_mean_of_means(self):
        value = metrics.mean_exploration([np.array([0.2, 0.2]), np.array([0.4, 0.4])])
        assert value == pytest.approx(0.3)

    def test_zero_alpha(self):
        assert metrics.mean_exploration([np.zeros(3), np.zeros(3)]) == 0.0
