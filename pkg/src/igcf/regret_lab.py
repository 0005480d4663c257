"""Synthetic Gaussian linear-bandit laboratory.

Tasks are taste vectors drawn from a known Gaussian; items are a fixed
ensemble of norm-bounded vectors drawn once per environment from a
truncated Gaussian.  The lab measures empirical Bayesian regret curves
for any policy and evaluates the analytic quantities the theory uses:
the sufficient-exploration round, the prior-estimation constants, and
the closed-form regret ceiling.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .online import PolicyConfig, UserPosterior, ucb_scores


@dataclass(frozen=True)
class SyntheticEnvConfig:
    dim: int = 4
    num_items: int = 50
    item_cov_scale: float = 0.25
    norm_bound: float = 1.0
    mean_bound: float = 1.0
    prior_mu_scale: float = 0.5
    prior_cov_scale: float = 0.25
    sigma_noise: float = 0.5

    def __post_init__(self):
        if min(self.dim, self.num_items) < 1:
            raise ValueError("dim and num_items must be positive")
        if min(self.item_cov_scale, self.norm_bound, self.prior_cov_scale,
               self.sigma_noise) <= 0:
            raise ValueError("scales must be positive")


@dataclass(eq=False)
class SyntheticEnv:
    """Item ensemble plus the true task prior and noise level."""

    dim: int
    items: np.ndarray
    mu_star: np.ndarray
    sigma_star: np.ndarray
    sigma_noise: float
    norm_bound: float
    item_cov: np.ndarray
    acceptance_rate: float

    @property
    def num_items(self) -> int:
        return self.items.shape[0]

    @property
    def lambda_bar(self) -> float:
        return float(np.linalg.eigvalsh(self.sigma_star)[-1])

    @property
    def lambda_item_cov(self) -> float:
        return float(np.linalg.eigvalsh(self.item_cov)[0])

    def draw_task(self, rng) -> np.ndarray:
        return rng.multivariate_normal(self.mu_star, self.sigma_star,
                                       method="cholesky")

    def reward(self, theta, item_index, rng) -> float:
        return float(theta @ self.items[item_index]
                     + self.sigma_noise * rng.standard_normal())


def sample_env(config: SyntheticEnvConfig, seed: int = 0) -> SyntheticEnv:
    """Draw the item ensemble by rejection from the truncated Gaussian.

    Aborts when fewer than 0.1% of proposals fall inside the norm ball.
    """
    rng = np.random.default_rng(seed)
    d = config.dim
    item_cov = config.item_cov_scale * np.eye(d)
    chol = np.linalg.cholesky(item_cov)
    accepted = []
    proposals = 0
    while len(accepted) < config.num_items:
        draw = rng.standard_normal((max(config.num_items, 64), d)) @ chol.T
        keep = np.linalg.norm(draw, axis=1) <= config.norm_bound
        proposals += draw.shape[0]
        accepted.extend(draw[keep])
        if proposals >= 100_000 and len(accepted) / proposals < 1e-3:
            raise ValueError(
                f"rejection rate {1 - len(accepted) / proposals:.5f} exceeds 99.9%; "
                "shrink item_cov_scale or raise norm_bound"
            )
    items = np.asarray(accepted[:config.num_items])
    mu_star = np.full(d, config.prior_mu_scale / math.sqrt(d))
    if np.linalg.norm(mu_star) > config.mean_bound:
        raise ValueError("prior mean violates its norm bound")
    sigma_star = config.prior_cov_scale * np.eye(d)
    return SyntheticEnv(
        dim=d,
        items=items,
        mu_star=mu_star,
        sigma_star=sigma_star,
        sigma_noise=config.sigma_noise,
        norm_bound=config.norm_bound,
        item_cov=item_cov,
        acceptance_rate=len(accepted) / proposals,
    )


def sufficient_rounds(chosen_vectors, lambda_item_cov: float, dim: int) -> float:
    """First round where the design matrix clears the exploration threshold.

    Returns infinity when the cumulative outer-product sum never reaches
    smallest eigenvalue >= lambda_item_cov * dim / 2.
    """
    threshold = lambda_item_cov * dim / 2.0
    design = np.zeros((dim, dim))
    for t, vector in enumerate(np.atleast_2d(chosen_vectors), start=1):
        design += np.outer(vector, vector)
        if np.linalg.eigvalsh(design)[0] >= threshold:
            return float(t)
    return math.inf


@dataclass(frozen=True)
class MetaPriorConstants:
    gamma: float
    c1: float
    c2: float
    feasible: bool


def meta_prior_constants(num_tasks: int, dim: int, horizon: int,
                         lambda_bar: float) -> MetaPriorConstants:
    """Widening and concentration constants for the estimated task prior."""
    m, d, t = num_tasks, dim, horizon
    inner = 5.0 * d + 2.0 * math.log(d * m * t / 3.0)
    gamma = 32.0 * lambda_bar * math.sqrt(inner / m)
    c1 = lambda_bar * (2.0 * d + 3.0 * math.log(d * m * t))
    c2 = (64.0 * lambda_bar) ** 2 * inner
    return MetaPriorConstants(gamma, c1, c2, feasible=m >= inner)


def bayes_regret_bound(horizon: int, tau: float, dim: int, num_items: int,
                       num_tasks: int, lambda_bar: float, sigma_noise: float,
                       norm_bound: float, mean_bound: float,
                       k1: float = 0.0, delta: float | None = None) -> float:
    """Closed-form ceiling on cumulative Bayesian regret.

    ``k1`` (the prior-mismatch inflation) is supplied by the caller; its
    own closed form chains through constants of the underlying
    meta-learning analysis that this lab treats parametrically.
    """
    t, d, n, m = horizon, dim, num_items, num_tasks
    a, mean_b = norm_bound, mean_bound
    sigma2 = sigma_noise ** 2
    if delta is None:
        delta = 1.0 / m
    gamma_cap = 4.0 * math.sqrt(
        lambda_bar / math.log1p(lambda_bar / sigma2) * math.log(4.0 * n * t)
    )
    b = a * (mean_b + math.sqrt(lambda_bar * d))
    k2 = 2.0 * b
    c_bad = 22.0 * a * (mean_b + math.sqrt(4.0 * lambda_bar * math.log(d * d * m * t)))
    main = gamma_cap * math.sqrt(0.5 * t * d * math.log1p(lambda_bar * t / sigma2))
    return (1.0 + k1) * (main + b) + c_bad * delta / math.sqrt(d) + k2 * tau


@dataclass(eq=False)
class RegretCurve:
    """Per-round regret averaged over replications, plus per-rep detail."""

    instantaneous: np.ndarray
    cumulative: np.ndarray
    per_rep_cumulative: np.ndarray
    taus: np.ndarray
    reps: int
    seed: int

    def cumulative_at(self, horizon: int) -> float:
        return float(self.cumulative[horizon - 1])


class OraclePolicy:
    """Knows the task vector; always plays the true best item."""

    def __init__(self, true_scores):
        self.best = int(np.argmax(true_scores))

    def select_index(self, items) -> int:
        return self.best

    def observe(self, vector, reward):
        pass


class UniformPolicy:
    def __init__(self, rng, num_items):
        self.rng = rng
        self.num_items = num_items

    def select_index(self, items) -> int:
        return int(self.rng.integers(self.num_items))

    def observe(self, vector, reward):
        pass


class PosteriorUcbPolicy:
    """Bayesian linear UCB over the fixed ensemble, from a given prior."""

    def __init__(self, prior_mu, prior_cov, config: PolicyConfig):
        self.state = UserPosterior.from_prior(prior_mu, prior_cov,
                                              config.sigma_noise)
        self.config = config

    def select_index(self, items) -> int:
        scores = ucb_scores(self.state, items, self.config)
        return int(np.argmax(scores))

    def observe(self, vector, reward):
        self.state.update(vector, reward)


def empirical_regret(env: SyntheticEnv, policy_factory, horizon: int,
                     reps: int, seed: int = 0) -> RegretCurve:
    """Monte Carlo Bayesian regret of a policy on the environment.

    ``policy_factory(theta, rng)`` builds a fresh policy per replication;
    every round offers the full item ensemble.  Instantaneous regret uses
    the replication's known task vector.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    inst_sum = np.zeros(horizon)
    per_rep_cum = np.zeros((reps, horizon))
    taus = np.zeros(reps)
    for rep in range(reps):
        rng = np.random.default_rng((seed, rep))
        theta = env.draw_task(rng)
        true_scores = env.items @ theta
        best = float(true_scores.max())
        policy = policy_factory(theta, rng)
        inst = np.zeros(horizon)
        chosen = np.zeros((horizon, env.dim))
        for t in range(horizon):
            idx = policy.select_index(env.items)
            reward = true_scores[idx] + env.sigma_noise * rng.standard_normal()
            policy.observe(env.items[idx], reward)
            inst[t] = best - true_scores[idx]
            chosen[t] = env.items[idx]
        inst_sum += inst
        per_rep_cum[rep] = np.cumsum(inst)
        taus[rep] = sufficient_rounds(chosen, env.lambda_item_cov, env.dim)
    mean_inst = inst_sum / reps
    return RegretCurve(
        instantaneous=mean_inst,
        cumulative=np.cumsum(mean_inst),
        per_rep_cumulative=per_rep_cum,
        taus=taus,
        reps=reps,
        seed=seed,
    )


def estimated_task_prior(env: SyntheticEnv, num_tasks: int, gamma: float,
                         seed: int = 0):
    """Meta prior from sampled task means: empirical mean/covariance + widening."""
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(env.mu_star, env.sigma_star,
                                    size=num_tasks, method="cholesky")
    mean = draws.mean(axis=0)
    centered = draws - mean
    cov = centered.T @ centered / (num_tasks - 1)
    cov = 0.5 * (cov + cov.T) + gamma * np.eye(env.dim)
    return mean, cov


def write_regret_csv(path, curve: RegretCurve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["rep", "t", "inst_regret", "cum_regret"])
        horizon = curve.per_rep_cumulative.shape[1]
        for rep in range(curve.reps):
            cum = curve.per_rep_cumulative[rep]
            prev = 0.0
            for t in range(horizon):
                writer.writerow([rep, t + 1, repr(float(cum[t] - prev)),
                                 repr(float(cum[t]))])
                prev = cum[t]


def regret_summary(curve: RegretCurve, checkpoints, bound_params=None) -> dict:
    """Checkpointed mean regret, with the analytic ceiling overlaid if given."""
    summary = {
        "reps": curve.reps,
        "seed": curve.seed,
        "mean_tau": float(np.mean(curve.taus[np.isfinite(curve.taus)]))
        if np.isfinite(curve.taus).any() else None,
        "checkpoints": {},
    }
    for horizon in checkpoints:
        entry = {"cumulative_regret": curve.cumulative_at(horizon)}
        if bound_params is not None:
            params = dict(bound_params)
            params["horizon"] = horizon
            entry["analytic_bound"] = bayes_regret_bound(**params)
        summary["checkpoints"][str(horizon)] = entry
    return summary


def write_regret_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
