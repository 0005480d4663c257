"""Reference policies: random, popularity, greedy MF, and ridge-posterior ICF."""

from __future__ import annotations

import numpy as np

from .online import rank_items


class IcfState:
    """Per-user ridge posterior over the taste vector.

    Keeps the normal-equation accumulators; mean and covariance are
    recomputed from them after every observation, matching the classical
    closed forms mu = (sum e e' + lambda I)^{-1} (sum e r) and
    Sigma = (sum e e' + lambda I)^{-1} sigma_noise^2.
    """

    def __init__(self, dim, lam=1.0, sigma_noise=1.0):
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.lam = float(lam)
        self.sigma_noise2 = float(sigma_noise) ** 2
        self._gram = lam * np.eye(dim)
        self._rhs = np.zeros(dim)
        self.round = 0
        self._solve()

    def _solve(self):
        self.mu = np.linalg.solve(self._gram, self._rhs)
        self.cov = np.linalg.solve(self._gram, np.eye(self._gram.shape[0]))
        self.cov = 0.5 * (self.cov + self.cov.T) * self.sigma_noise2

    def copy(self):
        dup = IcfState.__new__(IcfState)
        dup.lam = self.lam
        dup.sigma_noise2 = self.sigma_noise2
        dup._gram = self._gram.copy()
        dup._rhs = self._rhs.copy()
        dup.round = self.round
        dup.mu = self.mu.copy()
        dup.cov = self.cov.copy()
        return dup

    def update(self, vector, reward):
        vector = np.asarray(vector, dtype=float)
        self._gram += np.outer(vector, vector)
        self._rhs += float(reward) * vector
        self.round += 1
        self._solve()


def icf_update(state: IcfState, vector, reward) -> IcfState:
    out = state.copy()
    out.update(vector, reward)
    return out


def icf_scores(state: IcfState, vectors, mode="ucb", c=1.0, rng=None) -> np.ndarray:
    """Selection scores; t is the upcoming round so the bonus vanishes at t=1."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if mode == "ts":
        theta = rng.multivariate_normal(state.mu, state.cov, method="cholesky")
        return vectors @ theta
    means = vectors @ state.mu
    if mode != "ucb":
        raise ValueError(f"unknown icf mode {mode!r}")
    t = state.round + 1
    if c == 0.0 or t == 1:
        return means
    widths = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", vectors, state.cov, vectors), 0.0))
    return means + c * np.sqrt(np.log(t)) * widths


def icf_select(state: IcfState, item_ids, vectors, mode="ucb", c=1.0, rng=None):
    """Single best item under the mode; ties go to the lowest id."""
    item_ids = np.asarray(item_ids)
    if item_ids.size == 0:
        raise ValueError("candidate set is empty")
    scores = icf_scores(state, vectors, mode=mode, c=c, rng=rng)
    return int(rank_items(item_ids, scores, 1)[0])


class IcfPolicy:
    """ICF baseline with fixed pretrained item vectors and per-user ridge state."""

    def __init__(self, item_vectors, mode="ucb", c=1.0, lam=1.0,
                 sigma_noise=1.0, seed=0):
        self.item_vectors = np.asarray(item_vectors, dtype=float)
        self.mode = mode
        self.c = float(c)
        self.lam = lam
        self.sigma_noise = sigma_noise
        self.seed = seed
        self.name = f"icf_{mode}"
        self.state = None
        self._rng = None

    def begin_user(self, user, history_items=None, history_rewards=None):
        self.state = IcfState(self.item_vectors.shape[1], self.lam, self.sigma_noise)
        self._rng = np.random.default_rng((self.seed, int(user)))
        if history_items is not None and len(history_items):
            for item, reward in zip(history_items, history_rewards):
                self.state.update(self.item_vectors[int(item)], reward)

    def select(self, candidate_ids, k):
        vectors = self.item_vectors[np.asarray(candidate_ids, dtype=np.int64)]
        scores = icf_scores(self.state, vectors, self.mode, self.c, self._rng)
        return rank_items(candidate_ids, scores, k)

    def observe(self, item_id, reward):
        self.state.update(self.item_vectors[int(item_id)], reward)


class MfPolicy(IcfPolicy):
    """Greedy matrix-factorization baseline: ICF machinery with no bonus."""

    def __init__(self, item_vectors, lam=1.0, sigma_noise=1.0, seed=0):
        super().__init__(item_vectors, mode="ucb", c=0.0, lam=lam,
                         sigma_noise=sigma_noise, seed=seed)
        self.name = "mf"


class RandomPolicy:
    """Uniform selection without replacement, reproducible per (seed, user)."""

    name = "random"

    def __init__(self, seed=0):
        self.seed = seed
        self._rng = None

    def begin_user(self, user, history_items=None, history_rewards=None):
        self._rng = np.random.default_rng((self.seed, int(user)))

    def select(self, candidate_ids, k):
        candidate_ids = np.asarray(candidate_ids)
        picks = self._rng.choice(candidate_ids.size, size=k, replace=False)
        return candidate_ids[picks]

    def observe(self, item_id, reward):
        pass


class PopPolicy:
    """Most-popular-first, by count of satisfied training interactions."""

    name = "pop"

    def __init__(self, satisfied_counts):
        self.counts = np.asarray(satisfied_counts, dtype=float)

    def begin_user(self, user, history_items=None, history_rewards=None):
        pass

    def select(self, candidate_ids, k):
        candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        return rank_items(candidate_ids, self.counts[candidate_ids], k)

    def observe(self, item_id, reward):
        pass


def popularity_counts(dataset) -> np.ndarray:
    """Per-item satisfied-interaction counts, the Pop ranking key."""
    sat = dataset.satisfied
    counts = np.zeros(dataset.num_items, dtype=np.int64)
    if sat.any():
        counts += np.bincount(dataset.items[sat], minlength=dataset.num_items)
    return counts


def static_policies(dataset, mf_item_vectors=None, seed=0) -> dict:
    """The non-bandit reference policies built from training data.

    ``mf`` requires item vectors from a depth-0 pretraining run and is
    omitted when none are supplied.
    """
    policies = {
        "random": RandomPolicy(seed=seed),
        "pop": PopPolicy(popularity_counts(dataset)),
    }
    if mf_item_vectors is not None:
        policies["mf"] = MfPolicy(mf_item_vectors, seed=seed)
    return policies
