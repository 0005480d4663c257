"""Synthetic corpora for desk-scale experiments and tests.

``planted_factor_dataset`` gives a low-rank continuous-feedback corpus
with known ground truth.  ``surrogate_ratings`` mimics a rating corpus:
a handful of globally loved hit items, cluster-structured niche tastes,
and a popularity-skewed observation process, so that popularity,
personalization and exploration all have something to gain.
"""

from __future__ import annotations

import numpy as np

from .datasets import InteractionDataset


def _dataset_from_dense(users, items, values, num_users, num_items,
                        feedback_kind="rating", timestamps=None):
    if timestamps is None:
        timestamps = np.arange(users.size, dtype=float)
    return InteractionDataset(
        users=users.astype(np.int64),
        items=items.astype(np.int64),
        values=values.astype(float),
        timestamps=np.asarray(timestamps, dtype=float),
        num_users=int(num_users),
        num_items=int(num_items),
        feedback_kind=feedback_kind,
        user_ids=np.arange(num_users),
        item_ids=np.arange(num_items),
    )


def planted_factor_dataset(num_users=20, num_items=20, dim=2, noise=0.01,
                           observed_fraction=0.7, seed=0):
    """Low-rank scores plus tiny noise, split into observed and held-out parts.

    Returns (train, heldout, true_user_factors, true_item_factors).
    """
    rng = np.random.default_rng(seed)
    true_users = rng.standard_normal((num_users, dim))
    true_items = rng.standard_normal((num_items, dim))
    grid_u, grid_i = np.meshgrid(np.arange(num_users), np.arange(num_items),
                                 indexing="ij")
    users = grid_u.ravel()
    items = grid_i.ravel()
    values = np.einsum("ij,ij->i", true_users[users], true_items[items])
    values = values + noise * rng.standard_normal(values.size)
    observed = rng.random(values.size) < observed_fraction
    train = _dataset_from_dense(users[observed], items[observed],
                                values[observed], num_users, num_items)
    heldout = _dataset_from_dense(users[~observed], items[~observed],
                                  values[~observed], num_users, num_items)
    return train, heldout, true_users, true_items


def surrogate_ratings(num_users=200, num_items=500, num_clusters=4,
                      num_hits=25, seed=0):
    """Cluster-structured rating corpus with popularity skew.

    Returns (dataset, genres, info): ``genres`` is the one-hot item
    cluster matrix, ``info`` carries the planted assignments.
    """
    rng = np.random.default_rng(seed)
    user_cluster = rng.integers(0, num_clusters, size=num_users)
    item_cluster = rng.integers(0, num_clusters, size=num_items)
    hit_items = rng.choice(num_items, size=num_hits, replace=False)
    popularity = np.zeros(num_items)
    popularity[hit_items] = rng.uniform(1.3, 1.9, size=num_hits)

    match = (user_cluster[:, None] == item_cluster[None, :]).astype(float)
    mean_rating = 1.5 + 1.5 * popularity[None, :] + 2.5 * match
    ratings = np.clip(np.rint(mean_rating + 0.7 * rng.standard_normal(mean_rating.shape)),
                      0.0, 5.0)

    # observation probability: hits are seen by everyone, niche items
    # mostly inside their cluster, the rest rarely
    is_hit = np.zeros(num_items, dtype=bool)
    is_hit[hit_items] = True
    base = np.where(is_hit[None, :], 0.92, np.where(match > 0, 0.62, 0.20))
    activity = rng.uniform(0.5, 1.05, size=num_users)
    observed = rng.random(base.shape) < base * activity[:, None]

    users, items = np.nonzero(observed)
    values = ratings[users, items]
    order = rng.permutation(users.size)
    dataset = _dataset_from_dense(users[order], items[order], values[order],
                                  num_users, num_items,
                                  timestamps=np.arange(users.size, dtype=float))
    genres = np.zeros((num_items, num_clusters))
    genres[np.arange(num_items), item_cluster] = 1.0
    info = {
        "user_cluster": user_cluster,
        "item_cluster": item_cluster,
        "hit_items": np.sort(hit_items),
        "ratings": ratings,
    }
    return dataset, genres, info
