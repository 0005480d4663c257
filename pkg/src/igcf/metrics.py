"""Cumulative replay metrics over per-user episode logs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class EpisodeLog:
    """One user's episode: (T, k) arrays of slate items, thetas, raw rewards."""

    user: int
    items: np.ndarray
    thetas: np.ndarray
    rewards: np.ndarray

    @property
    def rounds(self) -> int:
        return self.items.shape[0]

    @property
    def slate_size(self) -> int:
        return self.items.shape[1]


def _check_rounds(logs, horizon):
    for log in logs:
        if horizon > log.rounds:
            raise ValueError(
                f"horizon {horizon} exceeds {log.rounds} logged rounds for user {log.user}"
            )


def precision_at(logs, horizon: int) -> float:
    """Mean over users of the summed theta feedback in the first T rounds."""
    _check_rounds(logs, horizon)
    totals = [log.thetas[:horizon].sum() for log in logs]
    return float(np.mean(totals))


def recall_at(logs, horizon: int, satisfied_counts) -> float:
    """Like precision but normalized by each user's satisfied-item count.

    Users with zero satisfied items cannot be scored and are excluded
    with a warning.
    """
    _check_rounds(logs, horizon)
    ratios = []
    for log in logs:
        denom = satisfied_counts[log.user]
        if denom <= 0:
            warnings.warn(f"user {log.user} has no satisfied items; excluded from recall")
            continue
        ratios.append(log.thetas[:horizon].sum() / denom)
    return float(np.mean(ratios)) if ratios else 0.0


def round_ndcg(thetas, k: int) -> float:
    """Rank quality of one slate; 0 when the round drew no feedback."""
    gains = np.exp2(np.asarray(thetas, dtype=float)[:k]) - 1.0
    discounts = np.log2(np.arange(2, gains.size + 2))
    ideal = np.sort(gains)[::-1]
    z = float((ideal / discounts).sum())
    if z == 0.0:
        return 0.0
    return float((gains / discounts).sum()) / z


def ndcg_at(logs, k: int, horizon: int) -> float:
    """Mean over users of per-round nDCG summed across the first T rounds."""
    _check_rounds(logs, horizon)
    totals = []
    for log in logs:
        if log.slate_size < k:
            raise ValueError(f"slate size {log.slate_size} smaller than k={k}")
        totals.append(sum(round_ndcg(log.thetas[t], k) for t in range(horizon)))
    return float(np.mean(totals))


def summarize(logs_by_policy, checkpoints, slate_k, satisfied_counts) -> dict:
    """Per-policy metric table at each checkpoint horizon."""
    summary = {}
    for policy, logs in logs_by_policy.items():
        entry = {}
        for horizon in checkpoints:
            entry[f"precision@{horizon}"] = precision_at(logs, horizon)
            entry[f"recall@{horizon}"] = recall_at(logs, horizon, satisfied_counts)
            entry[f"ndcg_{slate_k}@{horizon}"] = ndcg_at(logs, slate_k, horizon)
        summary[policy] = entry
    return summary
