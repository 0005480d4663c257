"""Shared helpers for building small random fixtures."""

import numpy as np

from igcf.datasets import InteractionDataset
from igcf.graph import PropagationSpec


def dataset_from_edges(users, items, num_users, num_items, values=None,
                       feedback_kind="rating"):
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if values is None:
        values = np.ones(users.size)
    return InteractionDataset(
        users=users,
        items=items,
        values=np.asarray(values, dtype=float),
        timestamps=np.arange(users.size, dtype=float),
        num_users=num_users,
        num_items=num_items,
        feedback_kind=feedback_kind,
        user_ids=np.arange(num_users),
        item_ids=np.arange(num_items),
    )


def random_bipartite(rng, max_users=8, max_items=8, density=0.4):
    """Random dataset over a dense index space, at least one edge."""
    m = int(rng.integers(1, max_users + 1))
    n = int(rng.integers(1, max_items + 1))
    mask = rng.random((m, n)) < density
    users, items = np.nonzero(mask)
    if users.size == 0:
        users, items = np.asarray([0]), np.asarray([0])
    return dataset_from_edges(users, items, m, n)


def random_spec(rng, depth=None):
    scheme = ("lightgcn", "sgcn", "appnp")[int(rng.integers(3))]
    depth = int(rng.integers(0, 4)) if depth is None else depth
    if scheme == "appnp":
        return PropagationSpec(scheme, depth, teleport=float(rng.uniform(0.1, 1.0)))
    if scheme == "lightgcn" and rng.random() < 0.5:
        weights = rng.uniform(0.0, 1.0, size=depth + 1)
        weights = weights / max(weights.sum(), 1e-9)
        return PropagationSpec(scheme, depth, layer_weights=tuple(weights))
    return PropagationSpec(scheme, depth)
