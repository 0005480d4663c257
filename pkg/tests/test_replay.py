import numpy as np
import pytest

from igcf.baselines import PopPolicy, RandomPolicy
from igcf.datasets import from_records
from igcf.metrics import precision_at
from igcf.replay import (
    ReplayEnvironment,
    build_drift_split,
    cold_start_split,
    drift_environment,
    run_episode,
    run_policy,
    write_log_csv,
)

from util import dataset_from_edges


def tiny_env():
    # one test user, three items rated 5, 2, 4
    data = dataset_from_edges([0, 0, 0], [0, 1, 2], 1, 3, values=[5.0, 2.0, 4.0])
    return ReplayEnvironment.from_dataset(data, "zero_fill")


class TestEnvironment:
    def test_zero_fill_missing_pair(self):
        env = tiny_env()
        theta, reward = env.theta_and_reward(0, 1)
        assert (theta, reward) == (0.0, 2.0)
        assert env.theta_and_reward(5, 0) == (0.0, 0.0)

    def test_fully_observed_missing_pair_raises(self):
        data = dataset_from_edges([0], [0], 1, 2, values=[5.0])
        env = ReplayEnvironment.from_dataset(data, "fully_observed")
        assert env.theta_and_reward(0, 0) == (1.0, 5.0)
        with pytest.raises(KeyError):
            env.theta_and_reward(0, 1)

    def test_watch_ratio_theta_is_raw_value(self):
        data = dataset_from_edges([0, 0], [0, 1], 1, 2, values=[3.7, 0.4],
                                  feedback_kind="watch_ratio")
        env = ReplayEnvironment.from_dataset(data, "zero_fill")
        assert env.theta_and_reward(0, 0) == (3.7, 3.7)
        capped = ReplayEnvironment.from_dataset(data, "zero_fill", theta_cap=2.0)
        assert capped.theta_and_reward(0, 0)[0] == 2.0

    def test_satisfied_count(self):
        env = tiny_env()
        assert env.satisfied_count(0) == 2


class TestRunEpisode:
    def test_pop_recommends_in_popularity_order(self):
        env = tiny_env()
        policy = PopPolicy(np.array([3.0, 1.0, 2.0]))
        log = run_episode(env, policy, 0, horizon=3, slate_k=1)
        assert log.items.ravel().tolist() == [0, 2, 1]
        assert log.thetas.ravel().tolist() == [1.0, 1.0, 0.0]

    def test_no_repeats_within_episode(self):
        data = dataset_from_edges([0] * 6, list(range(6)), 1, 20,
                                  values=[5.0] * 6)
        env = ReplayEnvironment.from_dataset(data, "zero_fill")
        log = run_episode(env, RandomPolicy(seed=1), 0, horizon=10, slate_k=2)
        flat = log.items.ravel()
        assert len(set(flat.tolist())) == flat.size

    def test_candidate_exhaustion(self):
        env = tiny_env()
        with pytest.raises(ValueError, match="cannot fill"):
            run_episode(env, RandomPolicy(seed=0), 0, horizon=4, slate_k=1)

    def test_slate_feedback_recorded_per_slot(self):
        env = tiny_env()
        policy = PopPolicy(np.array([3.0, 1.0, 2.0]))
        log = run_episode(env, policy, 0, horizon=1, slate_k=3)
        assert log.items[0].tolist() == [0, 2, 1]
        assert log.thetas[0].tolist() == [1.0, 1.0, 0.0]
        assert log.rewards[0].tolist() == [5.0, 4.0, 2.0]


class TestColdStartSplit:
    def test_most_active_held_out(self):
        data = from_records([0, 0, 0, 1, 2], [0, 1, 2, 0, 1], [5] * 5)
        train, test_users = cold_start_split(data, 1)
        assert test_users.tolist() == [0]
        assert 0 not in train.users.tolist()


class TestDriftSplit:
    def build_corpus(self, drifters=10, total=100, items_per_half=4):
        # genre-0 items 0..9, genre-1 items 10..19
        rng = np.random.default_rng(0)
        users, items, stamps = [], [], []
        for user in range(total):
            first = rng.choice(10, size=items_per_half, replace=False)
            if user < drifters:
                second = 10 + rng.choice(10, size=items_per_half, replace=False)
            else:
                second = rng.choice(10, size=items_per_half, replace=False)
            for t, item in enumerate(list(first) + list(second)):
                users.append(user)
                items.append(int(item))
                stamps.append(float(t))
        data = dataset_from_edges(users, items, total, 20,
                                  values=[5.0] * len(users))
        data.timestamps[:] = np.asarray(stamps)
        genres = np.zeros((20, 2))
        genres[:10, 0] = 1.0
        genres[10:, 1] = 1.0
        return data, genres

    def test_planted_drifters_selected(self):
        data, genres = self.build_corpus()
        split = build_drift_split(data, genres, 10, switch_round=3)
        assert sorted(split.test_users.tolist()) == list(range(10))
        assert np.all(split.similarity <= 1e-9)

    def test_identical_halves_never_selected(self):
        data, genres = self.build_corpus(drifters=5)
        split = build_drift_split(data, genres, 5)
        assert all(user < 5 for user in split.test_users)

    def test_requires_genres(self):
        data, _ = self.build_corpus()
        with pytest.raises(ValueError, match="genre"):
            build_drift_split(data, None, 5)

    def test_phase_switch_changes_feedback(self):
        data, genres = self.build_corpus()
        split = build_drift_split(data, genres, 10, switch_round=2)
        env = drift_environment(data, split)
        user = int(split.test_users[0])
        early_item = int(split.first_half[user][0])
        late_item = int(split.second_half[user][0])
        # before the switch only first-half items pay off
        assert env.theta_and_reward(user, early_item, round_index=1)[0] == 1.0
        assert env.theta_and_reward(user, late_item, round_index=1)[0] == 0.0
        # after the switch the ground truth flips
        assert env.theta_and_reward(user, early_item, round_index=3)[0] == 0.0
        assert env.theta_and_reward(user, late_item, round_index=3)[0] == 1.0


class TestLogCsv:
    def test_row_layout(self, tmp_path):
        env = tiny_env()
        policy = PopPolicy(np.array([3.0, 1.0, 2.0]))
        logs = {"pop": [run_episode(env, policy, 0, horizon=2, slate_k=1)]}
        path = tmp_path / "episodes.csv"
        write_log_csv(path, "cold_start", logs)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "experiment,policy,user,round,slot,item,theta,reward"
        assert len(lines) == 3
        assert lines[1].startswith("cold_start,pop,0,1,1,0,")


class TestRunPolicy:
    def test_precision_of_pop_on_tiny_corpus(self):
        env = tiny_env()
        logs = run_policy(env, PopPolicy(np.array([3.0, 1.0, 2.0])), [0], 3, 1)
        assert precision_at(logs, 3) == 2.0
