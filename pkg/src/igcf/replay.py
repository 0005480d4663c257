"""Offline replay: feedback environments, episodes, and experiment protocols.

A policy object drives one episode per user through the duck-typed
interface ``begin_user(user, history_items, history_rewards)``,
``select(candidate_ids, k) -> slate`` and ``observe(item_id, reward)``.
Each round the candidate set is every item not yet recommended to the
user; the slate is ranked in one scoring pass and all slate feedbacks
are applied after the round in slate order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .datasets import SATISFACTION_THRESHOLDS, exclude_users, most_active_users
from .metrics import EpisodeLog

PROTOCOLS = ("fully_observed", "zero_fill")


class ReplayEnvironment:
    """(user, item) -> feedback lookup with replay semantics.

    ``zero_fill`` treats unobserved pairs as zero feedback; the
    ``fully_observed`` protocol refuses to answer for missing pairs.
    For rating feedback theta is the satisfaction indicator (value >= 4);
    for watch-ratio feedback theta is the raw ratio (optionally capped).
    Phased ground truth (taste drift) restricts which of a user's
    interactions are visible before and after the switch round.
    """

    def __init__(self, num_items, feedback, feedback_kind,
                 protocol="zero_fill", phases=None, switch_round=None,
                 theta_cap=None):
        if protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {protocol!r}")
        self.num_items = int(num_items)
        self.feedback = feedback
        self.feedback_kind = feedback_kind
        self.protocol = protocol
        self.phases = phases
        self.switch_round = switch_round
        self.theta_cap = theta_cap
        if phases is not None and switch_round is None:
            raise ValueError("phased ground truth needs a switch round")

    @classmethod
    def from_dataset(cls, dataset, protocol="zero_fill", users=None, **kwargs):
        table = {}
        wanted = None if users is None else set(int(u) for u in users)
        for u, i, v in zip(dataset.users, dataset.items, dataset.values):
            u = int(u)
            if wanted is not None and u not in wanted:
                continue
            table.setdefault(u, {})[int(i)] = float(v)
        return cls(dataset.num_items, table, dataset.feedback_kind,
                   protocol=protocol, **kwargs)

    def _visible(self, user, item, round_index):
        if self.phases is None:
            return True
        first, second = self.phases[user]
        active = first if round_index <= self.switch_round else second
        return item in active

    def lookup(self, user, item, round_index=1):
        """Raw feedback value, honoring protocol and phase visibility."""
        value = self.feedback.get(user, {}).get(item)
        if value is None:
            if self.protocol == "fully_observed":
                raise KeyError(
                    f"pair (user={user}, item={item}) missing from a fully-observed table"
                )
            return 0.0
        if not self._visible(user, item, round_index):
            return 0.0
        return value

    def theta_and_reward(self, user, item, round_index=1):
        value = self.lookup(user, item, round_index)
        if self.feedback_kind == "rating":
            theta = 1.0 if value >= SATISFACTION_THRESHOLDS["rating"] else 0.0
        else:
            theta = value if self.theta_cap is None else min(value, self.theta_cap)
        return theta, value

    def satisfied_count(self, user) -> int:
        threshold = SATISFACTION_THRESHOLDS[self.feedback_kind]
        values = self.feedback.get(user, {})
        return sum(1 for v in values.values() if v >= threshold)


def run_episode(env: ReplayEnvironment, policy, user, horizon: int,
                slate_k: int = 1, history_items=None,
                history_rewards=None, exclude_history=False) -> EpisodeLog:
    """Drive one policy through T rounds for one user.

    History records seed the policy's posterior; they are only removed
    from the candidate pool when ``exclude_history`` is set (warm-start
    protocols keep them recommendable).
    """
    if env.num_items < horizon * slate_k:
        raise ValueError(
            f"{env.num_items} items cannot fill {horizon} rounds of size {slate_k}"
        )
    policy.begin_user(user, history_items, history_rewards)
    available = np.ones(env.num_items, dtype=bool)
    if exclude_history and history_items is not None:
        available[np.asarray(history_items, dtype=np.int64)] = False
    items = np.zeros((horizon, slate_k), dtype=np.int64)
    thetas = np.zeros((horizon, slate_k))
    rewards = np.zeros((horizon, slate_k))
    for t in range(1, horizon + 1):
        candidates = np.flatnonzero(available)
        if candidates.size < slate_k:
            raise ValueError(f"candidate set exhausted at round {t} for user {user}")
        slate = np.asarray(policy.select(candidates, slate_k), dtype=np.int64)
        for slot, item in enumerate(slate):
            theta, reward = env.theta_and_reward(int(user), int(item), t)
            items[t - 1, slot] = item
            thetas[t - 1, slot] = theta
            rewards[t - 1, slot] = reward
        for slot, item in enumerate(slate):
            policy.observe(int(item), rewards[t - 1, slot])
        available[slate] = False
    return EpisodeLog(int(user), items, thetas, rewards)


def run_policy(env, policy, users, horizon, slate_k=1, histories=None) -> list:
    """One episode per test user; histories maps user -> (items, rewards)."""
    logs = []
    for user in users:
        hist = histories.get(int(user)) if histories else None
        items, rewards = hist if hist is not None else (None, None)
        logs.append(run_episode(env, policy, int(user), horizon, slate_k,
                                items, rewards))
    return logs


def cold_start_split(dataset, num_test_users=200):
    """Hold out the most active users; their records leave the training set."""
    test_users = most_active_users(dataset, num_test_users)
    train = exclude_users(dataset, test_users)
    return train, test_users


@dataclass(eq=False)
class DriftSplit:
    """Per-test-user time-split halves and their genre similarity."""

    test_users: np.ndarray
    train_users: np.ndarray
    first_half: dict
    second_half: dict
    similarity: np.ndarray
    switch_round: int = 60


def _cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        # a user with an empty or genre-less half cannot exhibit drift
        return 1.0
    return float(a @ b / (na * nb))


def build_drift_split(dataset, genres, num_test_users, switch_round=60) -> DriftSplit:
    """Pick the users whose two time halves disagree most in genre taste.

    ``genres`` is an (num_items, num_genres) indicator/count matrix; a
    missing matrix means the corpus cannot support the drift protocol.
    """
    if genres is None:
        raise ValueError("drift protocol needs per-item genre data")
    genres = np.asarray(genres, dtype=float)
    if genres.shape[0] != dataset.num_items:
        raise ValueError("genre matrix rows must match the item count")
    if switch_round < 1:
        raise ValueError("switch round must be >= 1")
    similarities = np.ones(dataset.num_users)
    first_half, second_half = {}, {}
    for user in range(dataset.num_users):
        rows = np.flatnonzero(dataset.users == user)
        if rows.size < 2:
            continue
        order = rows[np.argsort(dataset.timestamps[rows], kind="stable")]
        half = order.size // 2
        early = dataset.items[order[:half]]
        late = dataset.items[order[half:]]
        first_half[user] = np.unique(early)
        second_half[user] = np.unique(late)
        similarities[user] = _cosine(genres[early].sum(axis=0),
                                     genres[late].sum(axis=0))
    ranked = np.lexsort((np.arange(dataset.num_users), similarities))
    test_users = ranked[:num_test_users]
    train_users = np.setdiff1d(np.arange(dataset.num_users), test_users)
    return DriftSplit(
        test_users=test_users,
        train_users=train_users,
        first_half={u: first_half.get(u, np.zeros(0, dtype=np.int64)) for u in test_users},
        second_half={u: second_half.get(u, np.zeros(0, dtype=np.int64)) for u in test_users},
        similarity=similarities[test_users],
        switch_round=switch_round,
    )


def drift_environment(dataset, split: DriftSplit, protocol="zero_fill") -> ReplayEnvironment:
    phases = {
        int(u): (set(split.first_half[u].tolist()), set(split.second_half[u].tolist()))
        for u in split.test_users
    }
    return ReplayEnvironment.from_dataset(
        dataset, protocol=protocol, users=split.test_users,
        phases=phases, switch_round=split.switch_round,
    )


def write_log_csv(path, experiment, logs_by_policy) -> None:
    """Flat per-slot record of every episode, one row per recommendation."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["experiment", "policy", "user", "round", "slot", "item", "theta", "reward"]
        )
        for policy, logs in logs_by_policy.items():
            for log in logs:
                for t in range(log.rounds):
                    for slot in range(log.slate_size):
                        writer.writerow([
                            experiment, policy, log.user, t + 1, slot + 1,
                            int(log.items[t, slot]),
                            repr(float(log.thetas[t, slot])),
                            repr(float(log.rewards[t, slot])),
                        ])
