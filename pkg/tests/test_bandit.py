import math

import numpy as np
import pytest

from faircascade import bandit
from faircascade.bandit import (
    BanditState,
    Feedback,
    PolicyConfig,
    RecommendationList,
    WeightFunctionSpec,
    WeightKind,
)
from faircascade.errors import ConfigError


def spec(kind, beta=0.0):
    return WeightFunctionSpec(WeightKind(kind), beta=beta)


class TestWeight:
    def test_log_at_first_position(self):
        assert bandit.weight(spec("log"), 1) == pytest.approx(math.log(2), rel=1e-12)

    def test_rbp_at_first_position(self):
        assert bandit.weight(spec("rbp", 0.9), 1) == 1.0

    def test_linear(self):
        assert bandit.weight(spec("linear", 0.05), 3) == pytest.approx(0.15)

    def test_constant_recovers_unweighted_model(self):
        for k in range(1, 20):
            assert bandit.weight(spec("constant"), k) == 1.0

    def test_nonpositive_weight_is_configuration_error(self):
        with pytest.raises(ConfigError):
            bandit.weight(spec("linear", -1.0), 2)
        with pytest.raises(ConfigError):
            bandit.weight(spec("rbp", 0.0), 2)

    def test_configurable_log_base(self):
        base2 = WeightFunctionSpec(WeightKind.LOG, log_base=2.0)
        assert bandit.weight(base2, 1) == pytest.approx(1.0)

    def test_log_and_linear_strictly_increase_with_position(self):
        # A click further down the list earns a strictly larger reward.
        for s in (spec("log"), spec("linear", 0.05)):
            values = [bandit.weight(s, k) for k in range(1, 11)]
            assert all(b > a for a, b in zip(values, values[1:]))


class TestGammaAdmissibleBound:
    def test_linear_beta_005_k10(self):
        assert bandit.gamma_admissible_bound(spec("linear", 0.05), 10) == pytest.approx(1.0)

    def test_rbp_beta_09_k10(self):
        assert bandit.gamma_admissible_bound(spec("rbp", 0.9), 10) == pytest.approx(0.0)

    def test_log_k5_is_negative(self):
        expected = 1.0 / math.log(6) - 1.0
        assert bandit.gamma_admissible_bound(spec("log"), 5) == pytest.approx(expected)
        assert expected == pytest.approx(-0.4419, abs=1e-4)

    def test_admissible_gamma_keeps_weighted_penalty_below_one(self):
        for s in (spec("linear", 0.05), spec("rbp", 0.9), spec("constant")):
            bound = bandit.gamma_admissible_bound(s, 10)
            if bound < 0:
                continue
            for gamma in (0.0, bound / 2, bound):
                for k in range(1, 11):
                    assert bandit.weight(s, k) * (1 + gamma) <= 1.0 + 1e-12


def clicked_once_state(d=2, lam=1.0):
    """State after one clicked update with x = e1 and unit weight."""
    state = BanditState.fresh(d, lam)
    x = np.zeros(d)
    x[0] = 1.0
    state.apply_examined(x, 1.0)
    state.b += x
    return state


class TestEstimateTheta:
    def test_fresh_state_is_zero(self):
        state = BanditState.fresh(4, 1.0)
        np.testing.assert_array_equal(bandit.estimate_theta(state, 1.0), np.zeros(4))

    def test_scalar_arithmetic(self):
        state = clicked_once_state(d=1)
        assert bandit.estimate_theta(state, 1.0)[0] == pytest.approx(0.5)

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(17)
        state = BanditState.fresh(3, 0.5)
        for _ in range(20):
            x = rng.standard_normal(3)
            state.apply_examined(x, 4.0)  # sigma = 0.5
            state.b += rng.uniform(-1, 1) * x
        sigma = 0.5
        theta = bandit.estimate_theta(state, sigma)
        direct = np.linalg.solve(state.m, state.b * sigma**-2)
        np.testing.assert_allclose(theta, direct, atol=1e-10)


class TestUcbScore:
    def test_fresh_state_unit_vector(self):
        state = BanditState.fresh(3, 1.0)
        x = np.array([1.0, 0.0, 0.0])
        assert bandit.ucb_score(state, x, 0.25, 1.0) == pytest.approx(0.25)

    def test_zero_vector(self):
        state = BanditState.fresh(3, 1.0)
        assert bandit.ucb_score(state, np.zeros(3), 5.0, 1.0) == 0.0

    def test_after_one_clicked_update(self):
        # M = diag(2, 1), B = e1: score(e1) = 0.5 + sqrt(0.5).
        state = clicked_once_state(d=2)
        x = np.array([1.0, 0.0])
        expected = 0.5 + math.sqrt(0.5)
        assert bandit.ucb_score(state, x, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)


def catalog_features(d):
    return np.ascontiguousarray(np.eye(d))


class TestRecommend:
    def test_orders_by_known_scores(self):
        features = catalog_features(3)
        state = BanditState.fresh(3, 1.0)
        state.b = np.array([0.9, 0.1, 0.5])
        config = PolicyConfig(k=2, alpha=0.0)
        rec = bandit.recommend(state, features, config)
        np.testing.assert_array_equal(rec.items, [0, 2])
        np.testing.assert_allclose(rec.scores, [0.9, 0.5])

    def test_ties_break_by_ascending_id(self):
        features = catalog_features(4)
        state = BanditState.fresh(4, 1.0)
        config = PolicyConfig(k=2, alpha=0.0)
        rec = bandit.recommend(state, features, config)
        np.testing.assert_array_equal(rec.items, [0, 1])

    def test_fresh_state_matches_full_sort_oracle(self):
        rng = np.random.default_rng(23)
        features = np.ascontiguousarray(
            rng.standard_normal((12, 4))
            / np.linalg.norm(rng.standard_normal((12, 4)), axis=1, keepdims=True)
        )
        state = BanditState.fresh(4, 1.0)
        config = PolicyConfig(k=5, alpha=0.8)
        rec = bandit.recommend(state, features, config)
        theta = bandit.estimate_theta(state, 1.0)
        scores = np.array(
            [bandit.ucb_score(state, features[i], 0.8, 1.0) for i in range(12)]
        )
        oracle = sorted(range(12), key=lambda i: (-scores[i], i))[:5]
        np.testing.assert_array_equal(rec.items, oracle)
        assert theta @ features[0] == pytest.approx(0.0)

    def test_list_contract(self):
        rng = np.random.default_rng(29)
        features = np.ascontiguousarray(rng.standard_normal((30, 5)))
        state = BanditState.fresh(5, 1.0)
        state.b = rng.standard_normal(5)
        rec = bandit.recommend(state, features, PolicyConfig(k=10, alpha=0.3))
        assert len(set(rec.items.tolist())) == 10
        assert all(s1 >= s2 for s1, s2 in zip(rec.scores, rec.scores[1:]))

    def test_small_catalog_is_configuration_error(self):
        state = BanditState.fresh(3, 1.0)
        with pytest.raises(ConfigError):
            bandit.recommend(state, catalog_features(3), PolicyConfig(k=4, alpha=0.1))


def replay_update(state0, items, features, click, weights, gamma, sigma):
    """Line-by-line naive oracle for the exposure-aware update."""
    m = state0.m.copy()
    b = state0.b.copy()
    for k in range(1, min(len(items), click) + 1):
        x = features[items[k - 1]]
        m = m + sigma**-2 * np.outer(x, x)
        if click == k:
            b = b + weights[k - 1] * x
        else:
            b = b - gamma * weights[k - 1] * x
    return m, b


def make_list(items, features):
    items = np.asarray(items, dtype=np.int64)
    return RecommendationList(items=items, scores=np.zeros(items.shape[0]))


class TestUpdate:
    def setup_method(self):
        rng = np.random.default_rng(31)
        self.features = np.ascontiguousarray(rng.standard_normal((6, 3)))
        self.features /= np.linalg.norm(self.features, axis=1, keepdims=True)

    def test_click_at_bottom_with_log_weights(self):
        config = PolicyConfig(k=2, alpha=0.1, gamma=0.1, weight_fn=spec("log"))
        state = BanditState.fresh(3, 1.0)
        rec = make_list([4, 2], self.features)
        bandit.update(state, rec, Feedback(2), config, self.features)
        expected_b = (
            math.log(3) * self.features[2] - 0.1 * math.log(2) * self.features[4]
        )
        np.testing.assert_allclose(state.b, expected_b, atol=1e-15)
        expected_m = np.eye(3) + np.outer(self.features[4], self.features[4])
        expected_m += np.outer(self.features[2], self.features[2])
        np.testing.assert_allclose(state.m, expected_m, atol=1e-15)

    def test_no_click_with_zero_gamma_leaves_b(self):
        config = PolicyConfig(k=3, alpha=0.1, gamma=0.0, weight_fn=spec("log"))
        state = BanditState.fresh(3, 1.0)
        rec = make_list([0, 1, 2], self.features)
        bandit.update(state, rec, Feedback(4), config, self.features)
        np.testing.assert_array_equal(state.b, np.zeros(3))
        assert state.update_count == 3

    def test_click_at_top_touches_single_item(self):
        config = PolicyConfig(k=3, alpha=0.1, gamma=0.5, weight_fn=spec("linear", 0.2))
        state = BanditState.fresh(3, 1.0)
        rec = make_list([5, 1, 3], self.features)
        bandit.update(state, rec, Feedback(1), config, self.features)
        oracle_m, oracle_b = replay_update(
            BanditState.fresh(3, 1.0), [5, 1, 3], self.features, 1,
            config.position_weights, 0.5, 1.0,
        )
        np.testing.assert_allclose(state.m, oracle_m, atol=1e-15)
        np.testing.assert_allclose(state.b, oracle_b, atol=1e-15)
        assert state.update_count == 1

    @pytest.mark.parametrize("click", [1, 2, 3, 4])
    def test_matches_replay_oracle(self, click):
        config = PolicyConfig(
            k=3, alpha=0.1, gamma=0.05, sigma=0.7, weight_fn=spec("rbp", 0.9)
        )
        state = BanditState.fresh(3, 1.0)
        rec = make_list([0, 4, 2], self.features)
        bandit.update(state, rec, Feedback(click), config, self.features)
        oracle_m, oracle_b = replay_update(
            BanditState.fresh(3, 1.0), [0, 4, 2], self.features, click,
            config.position_weights, 0.05, 0.7,
        )
        np.testing.assert_allclose(state.m, oracle_m, atol=1e-12)
        np.testing.assert_allclose(state.b, oracle_b, atol=1e-12)
        assert state.update_count == min(3, click)

    def test_unobserved_items_untouched(self):
        # Click at 2 of 3: the third item contributes to neither M nor B.
        config = PolicyConfig(k=3, alpha=0.1, gamma=0.2, weight_fn=spec("log"))
        full = BanditState.fresh(3, 1.0)
        bandit.update(full, make_list([0, 1, 2], self.features), Feedback(2), config, self.features)
        truncated = BanditState.fresh(3, 1.0)
        bandit.update(truncated, make_list([0, 1, 5], self.features), Feedback(2), config, self.features)
        np.testing.assert_array_equal(full.m, truncated.m)
        np.testing.assert_array_equal(full.b, truncated.b)

    def test_invalid_click_position(self):
        config = PolicyConfig(k=3, alpha=0.1)
        state = BanditState.fresh(3, 1.0)
        with pytest.raises(ValueError):
            bandit.update(state, make_list([0, 1, 2], self.features), Feedback(5), config, self.features)


class TestPenalizationMonotonicity:
    def test_unclicked_item_estimate_non_increasing_in_gamma(self):
        # Same feedback script for every gamma; item 0 is examined and
        # never clicked, so its estimated relevance must not grow with gamma.
        rng = np.random.default_rng(41)
        features = rng.standard_normal((5, 3))
        features /= np.linalg.norm(features, axis=1, keepdims=True)
        features = np.ascontiguousarray(features)
        script = [([0, 1, 2], 2), ([0, 3, 4], 3), ([0, 2, 4], 4)]
        estimates = []
        for gamma in (0.0, 0.05, 0.1, 0.3):
            config = PolicyConfig(k=3, alpha=0.1, gamma=gamma, weight_fn=spec("log"))
            state = BanditState.fresh(3, 1.0)
            for items, click in script:
                bandit.update(state, make_list(items, features), Feedback(click), config, features)
            theta = bandit.estimate_theta(state, 1.0)
            estimates.append(float(theta @ features[0]))
        assert all(b <= a + 1e-12 for a, b in zip(estimates, estimates[1:]))


class TestReductionToUnweighted:
    def test_trajectories_identical(self):
        # Constant weights with zero penalty follow the classic update
        # bit-for-bit, recommendation by recommendation.
        rng = np.random.default_rng(55)
        features = rng.standard_normal((15, 4))
        features /= np.linalg.norm(features, axis=1, keepdims=True)
        features = np.ascontiguousarray(features)
        config = PolicyConfig(k=3, alpha=0.5, gamma=0.0, weight_fn=spec("constant"))
        ea_state = BanditState.fresh(4, 1.0)
        classic_state = BanditState.fresh(4, 1.0)
        click_rng = np.random.default_rng(77)
        for _ in range(60):
            rec_ea = bandit.recommend(ea_state, features, config)
            rec_classic = bandit.recommend(classic_state, features, config)
            np.testing.assert_array_equal(rec_ea.items, rec_classic.items)
            click = int(click_rng.integers(1, 5))
            bandit.update(ea_state, rec_ea, Feedback(click), config, features)
            bandit.update_unweighted(classic_state, rec_classic, Feedback(click), config, features)
            np.testing.assert_array_equal(ea_state.b, classic_state.b)
            np.testing.assert_array_equal(ea_state.m, classic_state.m)


class TestEarsRerank:
    def setup_method(self):
        rng = np.random.default_rng(61)
        self.features = np.ascontiguousarray(rng.standard_normal((8, 3)))
        self.theta = np.array([1.0, 0.0, 0.0])

    def test_all_above_cutoff_unchanged(self):
        rec = make_list([0, 1, 2], self.features)
        out = bandit.ears_rerank(
            rec, self.theta, self.features, -1e9, np.random.default_rng(0)
        )
        np.testing.assert_array_equal(out.items, rec.items)

    def test_none_above_cutoff_permutes_everything(self):
        rec = make_list([0, 1, 2, 3], self.features)
        seen = set()
        for seed in range(40):
            out = bandit.ears_rerank(
                rec, self.theta, self.features, 1e9, np.random.default_rng(seed)
            )
            assert sorted(out.items.tolist()) == [0, 1, 2, 3]
            seen.add(tuple(out.items.tolist()))
        assert len(seen) > 5

    def test_tail_shuffle_is_uniform(self):
        # Three-item tail: each of the 6 orders should appear ~1/6 of the
        # time over 10k shuffles (3-sigma band of the exact multinomial).
        features = np.zeros((4, 3))
        features[0, 0] = 1.0  # only item 0 is relevant
        rec = make_list([0, 1, 2, 3], features)
        rng = np.random.default_rng(99)
        counts = {}
        trials = 10_000
        for _ in range(trials):
            out = bandit.ears_rerank(rec, self.theta, features, 0.5, rng)
            assert out.items[0] == 0
            key = tuple(out.items[1:].tolist())
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        p = 1.0 / 6.0
        sigma = math.sqrt(trials * p * (1 - p))
        for value in counts.values():
            assert abs(value - trials * p) < 3 * sigma

    def test_median_cutoff_keeps_half_stable(self):
        features = np.ascontiguousarray(np.diag([4.0, 3.0, 2.0, 1.0]))
        theta = np.array([1.0, 1.0, 1.0, 1.0])
        rec = make_list([0, 1, 2, 3], features)
        out = bandit.ears_rerank(rec, theta, features, None, np.random.default_rng(5))
        # relevances 4,3,2,1; median 2.5 keeps items 0 and 1 at the head
        np.testing.assert_array_equal(out.items[:2], [0, 1])
        assert sorted(out.items[2:].tolist()) == [2, 3]


class TestDriftCorrection:
    def test_inverse_refreshed_on_schedule(self):
        rng = np.random.default_rng(71)
        state = BanditState.fresh(4, 1.0)
        for _ in range(bandit.DRIFT_CORRECTION_INTERVAL + 5):
            state.apply_examined(rng.standard_normal(4), 1.0)
        product = state.m @ state.m_inv
        assert np.max(np.abs(product - np.eye(4))) < 1e-6
