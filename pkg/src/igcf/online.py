"""Online Bayesian linear recommendation.

A user's belief is a Gaussian over a d-dimensional taste vector, kept in
precision form so that each feedback is a rank-1 precision update and
candidate scoring needs only triangular solves against the cached
Cholesky factor.  New users start from the meta prior: the empirical
mean and covariance of the pretrained users' final vectors, widened by
``gamma * I``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

POLICY_MODES = ("ucb_info", "linucb", "thompson", "greedy")


@dataclass(frozen=True)
class PolicyConfig:
    """Selection rule and its scalars.

    ``ucb_info`` adds the information-theoretic confidence bonus,
    ``linucb`` the classical posterior-deviation bonus scaled by ``nu``,
    ``thompson`` ranks by a posterior sample, ``greedy`` by the mean.
    """

    mode: str = "ucb_info"
    delta: float = 0.05
    nu: float = 1.0
    sigma_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.nu < 0.0:
            raise ValueError("nu must be nonnegative")
        if self.sigma_noise <= 0.0:
            raise ValueError("sigma_noise must be positive")


@dataclass(eq=False)
class MetaPrior:
    """Empirical Gaussian over user vectors plus the widening scalar."""

    mu: np.ndarray
    sigma: np.ndarray
    gamma: float = 0.1

    def widened(self) -> np.ndarray:
        return self.sigma + self.gamma * np.eye(self.sigma.shape[0])


def build_meta_prior(model, gamma: float = 0.1, users=None) -> MetaPrior:
    """Mean and sample covariance (denominator M-1) of user final vectors.

    ``users`` restricts the statistics to a user subset, e.g. only users
    that actually appear in the training interactions.
    """
    vectors = model.user_vectors
    if users is not None:
        vectors = vectors[np.asarray(users, dtype=np.int64)]
    m = vectors.shape[0]
    if m < 2:
        raise ValueError("need at least 2 users for a sample covariance")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    mean = vectors.mean(axis=0)
    centered = vectors - mean
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)
    return MetaPrior(mean, cov, gamma)


class UserPosterior:
    """Gaussian belief N(mu, precision^{-1}) over one user's vector."""

    def __init__(self, mu, precision, sigma_noise, round_index=0):
        self.mu = np.asarray(mu, dtype=float).copy()
        self.precision = np.asarray(precision, dtype=float).copy()
        self.sigma_noise2 = float(sigma_noise) ** 2
        self.round = int(round_index)
        self._b = self.precision @ self.mu
        self._refresh()

    def _refresh(self):
        try:
            self._chol = cho_factor(self.precision, lower=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"posterior precision not positive definite: {exc}"
            ) from None

    @classmethod
    def from_prior(cls, mean, cov, sigma_noise) -> "UserPosterior":
        cov = np.asarray(cov, dtype=float)
        chol = cho_factor(cov, lower=True)
        precision = cho_solve(chol, np.eye(cov.shape[0]))
        precision = 0.5 * (precision + precision.T)
        return cls(mean, precision, sigma_noise)

    @property
    def dim(self) -> int:
        return self.mu.size

    def copy(self) -> "UserPosterior":
        dup = UserPosterior.__new__(UserPosterior)
        dup.mu = self.mu.copy()
        dup.precision = self.precision.copy()
        dup.sigma_noise2 = self.sigma_noise2
        dup.round = self.round
        dup._b = self._b.copy()
        dup._chol = (self._chol[0].copy(), self._chol[1])
        return dup

    def covariance(self) -> np.ndarray:
        return cho_solve(self._chol, np.eye(self.dim))

    def update(self, vector, reward) -> None:
        """Conjugate rank-1 update after observing one (item, reward) pair."""
        if not np.isfinite(reward):
            raise ValueError(f"non-finite reward {reward!r}")
        vector = np.asarray(vector, dtype=float)
        self.precision += np.outer(vector, vector) / self.sigma_noise2
        self._b += (float(reward) / self.sigma_noise2) * vector
        self._refresh()
        self.mu = cho_solve(self._chol, self._b)
        self.round += 1

    def score_variances(self, vectors) -> np.ndarray:
        """Quadratic forms e' Sigma e for each row e of ``vectors``."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        solved = cho_solve(self._chol, vectors.T)
        return np.einsum("ij,ji->i", vectors, solved)

    def sample(self, rng) -> np.ndarray:
        """One posterior draw of the taste vector."""
        z = rng.standard_normal(self.dim)
        lower = self._chol[0]
        return self.mu + solve_triangular(lower, z, lower=True, trans="T")


def update_posterior(state: UserPosterior, vector, reward) -> UserPosterior:
    """Functional form of :meth:`UserPosterior.update`."""
    out = state.copy()
    out.update(vector, reward)
    return out


def init_user(meta: MetaPrior, sigma_noise: float,
              history_vectors=None, history_rewards=None) -> UserPosterior:
    """Initial belief: widened meta prior, conditioned on any recorded history.

    With an empty history this is exactly N(mu_meta, sigma_meta + gamma I);
    with history it equals that cold start followed by one conjugate
    update per record.
    """
    wide = meta.widened()
    try:
        chol = cho_factor(wide, lower=True)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "widened meta covariance is singular; increase gamma"
        ) from None
    precision = cho_solve(chol, np.eye(wide.shape[0]))
    precision = 0.5 * (precision + precision.T)
    b = precision @ meta.mu
    sigma_noise2 = float(sigma_noise) ** 2
    rounds = 0
    if history_vectors is not None and len(history_vectors):
        x = np.atleast_2d(np.asarray(history_vectors, dtype=float))
        y = np.asarray(history_rewards, dtype=float)
        precision = precision + x.T @ x / sigma_noise2
        b = b + x.T @ y / sigma_noise2
        rounds = y.size
    mu = np.linalg.solve(precision, b)
    return UserPosterior(mu, precision, sigma_noise, round_index=rounds)


def mutual_information(state: UserPosterior, vector) -> float:
    """Information carried by one observation of the item's reward."""
    q = float(state.score_variances(vector)[0])
    return 0.5 * np.log1p(max(q, 0.0) / state.sigma_noise2)


def confidence_width(state: UserPosterior, vectors, delta: float) -> float:
    """Confidence scaling for the round's candidate set.

    Uses the largest posterior score variance over the candidates; in the
    zero-variance limit the variance/log ratio tends to the noise
    variance, which keeps the width finite and continuous.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[0] == 0:
        raise ValueError("candidate set is empty")
    lam = float(np.max(state.score_variances(vectors)))
    sigma2 = state.sigma_noise2
    if lam > 0.0:
        ratio = lam / np.log1p(lam / sigma2)
    else:
        ratio = sigma2
    return 4.0 * np.sqrt(ratio * np.log(2.0 * vectors.shape[0] / delta))


def ucb_scores(state: UserPosterior, vectors, config: PolicyConfig) -> np.ndarray:
    """Scores of all candidates under the configured deterministic rule."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    means = vectors @ state.mu
    if config.mode == "greedy":
        return means
    variances = np.maximum(state.score_variances(vectors), 0.0)
    if config.mode == "linucb":
        return means + config.nu * np.sqrt(variances)
    if config.mode == "ucb_info":
        width = confidence_width(state, vectors, config.delta)
        info = 0.5 * np.log1p(variances / state.sigma_noise2)
        return means + 0.5 * width * np.sqrt(info)
    raise ValueError(f"no deterministic score for mode {config.mode!r}")


def rank_items(item_ids, scores, k: int) -> np.ndarray:
    """Top-k item ids by descending score, ties broken by ascending id."""
    item_ids = np.asarray(item_ids)
    order = np.lexsort((item_ids, -np.asarray(scores, dtype=float)))
    return item_ids[order[:k]]


def select(state: UserPosterior, item_ids, vectors, config: PolicyConfig,
           k: int = 1, rng=None) -> np.ndarray:
    """Ordered slate of k items for this round.

    Thompson mode draws one posterior sample per round and ranks by its
    predicted scores; the other modes rank by :func:`ucb_scores`.
    """
    item_ids = np.asarray(item_ids)
    if k < 1 or item_ids.size < k:
        raise ValueError(f"need at least k={k} candidates, have {item_ids.size}")
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if config.mode == "thompson":
        rng = np.random.default_rng(config.seed) if rng is None else rng
        theta = state.sample(rng)
        scores = vectors @ theta
    else:
        scores = ucb_scores(state, vectors, config)
    return rank_items(item_ids, scores, k)


class BayesLinUcbPolicy:
    """Replay-facing recommender: meta-prior init, conjugate updates, UCB.

    Holds the fixed item vectors; per-user state is created by
    ``begin_user`` and advanced by ``observe``.
    """

    name = "igcf"

    def __init__(self, item_vectors, meta: MetaPrior, config: PolicyConfig):
        self.item_vectors = np.asarray(item_vectors, dtype=float)
        self.meta = meta
        self.config = config
        self.state = None
        self._rng = None

    def begin_user(self, user, history_items=None, history_rewards=None):
        vectors = None
        if history_items is not None and len(history_items):
            vectors = self.item_vectors[np.asarray(history_items, dtype=np.int64)]
        self.state = init_user(
            self.meta, self.config.sigma_noise, vectors, history_rewards
        )
        self._rng = np.random.default_rng((self.config.seed, int(user)))

    def select(self, candidate_ids, k):
        vectors = self.item_vectors[np.asarray(candidate_ids, dtype=np.int64)]
        return select(self.state, candidate_ids, vectors, self.config, k, self._rng)

    def observe(self, item_id, reward):
        self.state.update(self.item_vectors[int(item_id)], reward)
