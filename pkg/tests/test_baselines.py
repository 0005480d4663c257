import numpy as np
import pytest

from igcf.baselines import (
    IcfPolicy,
    IcfState,
    MfPolicy,
    PopPolicy,
    RandomPolicy,
    icf_select,
    icf_update,
    popularity_counts,
    static_policies,
)
from igcf.datasets import from_records
from igcf.online import UserPosterior


class TestIcfUpdate:
    def test_single_observation_closed_form(self):
        state = IcfState(dim=2, lam=1.0, sigma_noise=1.0)
        out = icf_update(state, np.array([1.0, 0.0]), 1.0)
        assert np.allclose(out.mu, [0.5, 0.0])
        assert np.allclose(out.cov, np.diag([0.5, 1.0]))

    def test_no_observations(self):
        state = IcfState(dim=3, lam=2.0, sigma_noise=2.0)
        assert np.allclose(state.mu, 0.0)
        assert np.allclose(state.cov, np.eye(3) * 4.0 / 2.0)

    def test_matches_normal_equation_oracle(self):
        rng = np.random.default_rng(0)
        d, n, lam, sigma = 4, 20, 0.7, 1.3
        state = IcfState(dim=d, lam=lam, sigma_noise=sigma)
        x = rng.standard_normal((n, d))
        y = rng.standard_normal(n)
        for vector, reward in zip(x, y):
            state.update(vector, reward)
        gram = x.T @ x + lam * np.eye(d)
        assert np.abs(state.mu - np.linalg.solve(gram, x.T @ y)).max() <= 1e-8
        assert np.abs(state.cov - np.linalg.inv(gram) * sigma**2).max() <= 1e-8

    def test_equals_online_posterior_special_case(self):
        # fixed prior N(0, (sigma^2/lambda) I) makes the two updates identical
        rng = np.random.default_rng(1)
        for _ in range(10):
            d = int(rng.integers(1, 6))
            lam = float(rng.uniform(0.5, 3.0))
            sigma = float(rng.uniform(0.5, 2.0))
            icf = IcfState(dim=d, lam=lam, sigma_noise=sigma)
            online = UserPosterior(np.zeros(d), (lam / sigma**2) * np.eye(d), sigma)
            for _ in range(12):
                vector = rng.standard_normal(d)
                reward = float(rng.standard_normal())
                icf.update(vector, reward)
                online.update(vector, reward)
            assert np.abs(icf.mu - online.mu).max() <= 1e-8
            assert np.abs(icf.cov - online.covariance()).max() <= 1e-8


class TestIcfSelect:
    def test_zero_bonus_is_greedy(self):
        state = IcfState(dim=2)
        state.update(np.array([1.0, 0.0]), 2.0)
        ids = np.array([0, 1])
        vectors = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert icf_select(state, ids, vectors, mode="ucb", c=0.0) == 0

    def test_first_round_bonus_vanishes(self):
        # t = 1 means log t = 0, so ucb reduces to the (zero) means
        state = IcfState(dim=2)
        ids = np.array([4, 2])
        vectors = np.eye(2)
        assert icf_select(state, ids, vectors, mode="ucb", c=5.0) == 2

    def test_empty_candidates(self):
        state = IcfState(dim=2)
        with pytest.raises(ValueError):
            icf_select(state, np.array([]), np.zeros((0, 2)))

    def test_thompson_symmetric_items(self):
        state = IcfState(dim=2)
        picks = 0
        trials = 10_000
        rng = np.random.default_rng(7)
        for _ in range(trials):
            picks += icf_select(state, np.array([0, 1]), np.eye(2),
                                mode="ts", rng=rng) == 0
        assert abs(picks / trials - 0.5) < 0.02


class TestStaticPolicies:
    def test_pop_ranking(self):
        counts = np.array([5, 2, 9])
        policy = PopPolicy(counts)
        policy.begin_user(0)
        assert policy.select(np.array([0, 1, 2]), 3).tolist() == [2, 0, 1]

    def test_pop_invariant_to_interaction_order(self):
        data = from_records([0, 1, 0, 2], [1, 0, 0, 1], [5, 4, 4, 5])
        shuffled = from_records([2, 0, 0, 1], [1, 1, 0, 0], [5, 5, 4, 4])
        assert popularity_counts(data).tolist() == popularity_counts(shuffled).tolist()

    def test_random_reproducible(self):
        first = RandomPolicy(seed=3)
        second = RandomPolicy(seed=3)
        first.begin_user(9)
        second.begin_user(9)
        ids = np.arange(50)
        assert np.array_equal(first.select(ids, 5), second.select(ids, 5))

    def test_static_bundle(self):
        data = from_records([0, 1], [0, 1], [5, 5])
        bundle = static_policies(data, mf_item_vectors=np.ones((2, 2)))
        assert set(bundle) == {"random", "pop", "mf"}
        assert isinstance(bundle["mf"], MfPolicy)
        assert set(static_policies(data)) == {"random", "pop"}

    def test_mf_is_greedy_icf(self):
        policy = MfPolicy(np.eye(3), seed=0)
        assert policy.c == 0.0
        policy.begin_user(1)
        policy.observe(0, 5.0)
        ids = np.arange(3)
        assert policy.select(ids, 1).tolist() == [0]
