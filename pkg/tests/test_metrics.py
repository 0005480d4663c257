import numpy as np
import pytest

from igcf.metrics import (
    EpisodeLog,
    ndcg_at,
    precision_at,
    recall_at,
    round_ndcg,
    summarize,
)


def log_from_thetas(thetas, user=0):
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    items = np.arange(thetas.size).reshape(thetas.shape)
    return EpisodeLog(user, items, thetas, thetas.copy())


class TestPrecision:
    def test_single_user_sum(self):
        log = log_from_thetas([1.0, 0.0, 1.0])
        assert precision_at([log], 3) == 2.0

    def test_all_zero(self):
        assert precision_at([log_from_thetas([0.0, 0.0])], 2) == 0.0

    def test_horizon_exceeds_log(self):
        with pytest.raises(ValueError):
            precision_at([log_from_thetas([1.0])], 5)

    def test_non_decreasing_in_horizon(self):
        rng = np.random.default_rng(0)
        logs = [log_from_thetas(rng.integers(0, 2, size=20), user=u)
                for u in range(5)]
        values = [precision_at(logs, t) for t in range(1, 21)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestRecall:
    def test_half_of_satisfied(self):
        log = log_from_thetas([1.0, 0.0, 1.0, 0.0])
        assert recall_at([log], 4, {0: 4}) == pytest.approx(0.5)

    def test_bounded_by_one_for_binary_feedback(self):
        rng = np.random.default_rng(1)
        thetas = rng.integers(0, 2, size=30).astype(float)
        log = log_from_thetas(thetas)
        counts = {0: max(int(thetas.sum()), 1)}
        assert recall_at([log], 30, counts) <= 1.0

    def test_zero_count_user_excluded_with_warning(self):
        logs = [log_from_thetas([1.0, 1.0], user=0),
                log_from_thetas([1.0, 0.0], user=1)]
        with pytest.warns(UserWarning, match="user 1"):
            value = recall_at(logs, 2, {0: 2, 1: 0})
        assert value == pytest.approx(1.0)

    def test_matches_recount_oracle(self):
        rng = np.random.default_rng(2)
        logs = []
        counts = {}
        for user in range(6):
            thetas = rng.integers(0, 2, size=12).astype(float)
            logs.append(log_from_thetas(thetas, user=user))
            counts[user] = int(rng.integers(1, 8))
        horizon = 9
        oracle = np.mean([log.thetas[:horizon].sum() / counts[log.user]
                          for log in logs])
        assert recall_at(logs, horizon, counts) == pytest.approx(float(oracle))


class TestNdcg:
    def test_perfect_round(self):
        assert round_ndcg([1.0, 1.0, 1.0], 3) == pytest.approx(1.0)

    def test_hand_worked_round(self):
        # gains (1,0,1): dcg = 1 + 0 + 1/2, ideal = 1 + 1/log2(3)
        value = round_ndcg([1.0, 0.0, 1.0], 3)
        expected = 1.5 / (1.0 + 1.0 / np.log2(3.0))
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.91972, abs=1e-4)

    def test_zero_feedback_round_scores_zero(self):
        assert round_ndcg([0.0, 0.0], 2) == 0.0

    def test_sorted_ordering_is_best(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            thetas = rng.random(4) * rng.integers(0, 2, size=4)
            best = round_ndcg(np.sort(thetas)[::-1], 4)
            assert round_ndcg(rng.permutation(thetas), 4) <= best + 1e-12

    def test_round_values_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            thetas = rng.integers(0, 2, size=5).astype(float)
            assert 0.0 <= round_ndcg(thetas, 5) <= 1.0

    def test_cumulative_bounded_by_horizon(self):
        rng = np.random.default_rng(5)
        logs = [EpisodeLog(u, np.zeros((7, 3), dtype=np.int64),
                           rng.integers(0, 2, size=(7, 3)).astype(float),
                           np.zeros((7, 3))) for u in range(3)]
        assert ndcg_at(logs, 3, 7) <= 7.0

    def test_slate_smaller_than_k(self):
        log = log_from_thetas([1.0, 1.0])
        with pytest.raises(ValueError):
            ndcg_at([log], 3, 2)


class TestDeterminism:
    def test_user_order_does_not_matter(self):
        rng = np.random.default_rng(6)
        logs = [log_from_thetas(rng.integers(0, 2, size=10), user=u)
                for u in range(8)]
        counts = {u: 3 for u in range(8)}
        forward = (precision_at(logs, 10), recall_at(logs, 10, counts),
                   ndcg_at(logs, 1, 10))
        reversed_logs = list(reversed(logs))
        backward = (precision_at(reversed_logs, 10),
                    recall_at(reversed_logs, 10, counts),
                    ndcg_at(reversed_logs, 1, 10))
        assert forward == backward


class TestSummary:
    def test_structure(self):
        logs = {"pop": [log_from_thetas([1.0, 0.0, 1.0])]}
        out = summarize(logs, [2, 3], 1, {0: 2})
        assert out["pop"]["precision@3"] == 2.0
        assert set(out["pop"]) == {"precision@2", "recall@2", "ndcg_1@2",
                                   "precision@3", "recall@3", "ndcg_1@3"}
