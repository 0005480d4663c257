"""Interaction datasets: ingestion, dense re-indexing, satisfaction rules, splits."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

FORMATS = ("movielens_dat", "csv_triplets", "kuairec_csv")

# feedback kind -> threshold at which an interaction counts as satisfied
SATISFACTION_THRESHOLDS = {"rating": 4.0, "watch_ratio": 2.0}


class DataError(Exception):
    """Malformed or inconsistent input data."""


@dataclass(eq=False)
class InteractionDataset:
    """(user, item, value, timestamp) records with dense indices.

    ``users``/``items`` are dense indices in ``[0, num_users)`` and
    ``[0, num_items)``; ``user_ids``/``item_ids`` map a dense index back
    to the original identifier.  ``feedback_kind`` selects the
    satisfaction rule: ratings are satisfied at value >= 4, watch ratios
    at value >= 2.
    """

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray
    num_users: int
    num_items: int
    feedback_kind: str
    user_ids: np.ndarray
    item_ids: np.ndarray

    def __len__(self) -> int:
        return int(self.users.size)

    @property
    def satisfied(self) -> np.ndarray:
        threshold = SATISFACTION_THRESHOLDS[self.feedback_kind]
        return self.values >= threshold

    def satisfied_counts(self) -> np.ndarray:
        """Number of satisfied interactions per user."""
        counts = np.zeros(self.num_users, dtype=np.int64)
        sat = self.satisfied
        if sat.any():
            counts += np.bincount(self.users[sat], minlength=self.num_users)
        return counts

    def interaction_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.num_users)

    def fingerprint(self) -> str:
        """Content hash of the records, for provenance manifests."""
        digest = hashlib.sha256()
        for arr in (self.users, self.items, self.values, self.timestamps):
            digest.update(np.ascontiguousarray(arr).tobytes())
        digest.update(self.feedback_kind.encode())
        return digest.hexdigest()


def from_records(user_ids, item_ids, values, timestamps=None,
                 feedback_kind="rating") -> InteractionDataset:
    """Build a dataset from raw id arrays, re-indexing ids densely.

    Dense indices follow ascending original-id order, so the mapping is a
    recoverable bijection.
    """
    if feedback_kind not in SATISFACTION_THRESHOLDS:
        raise DataError(f"unknown feedback kind {feedback_kind!r}")
    user_ids = np.asarray(user_ids)
    item_ids = np.asarray(item_ids)
    values = np.asarray(values, dtype=float)
    if timestamps is None:
        timestamps = np.zeros(user_ids.size, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    if not (user_ids.size == item_ids.size == values.size == timestamps.size):
        raise DataError("record arrays must have equal length")
    unique_users, users = np.unique(user_ids, return_inverse=True)
    unique_items, items = np.unique(item_ids, return_inverse=True)
    return InteractionDataset(
        users=users.astype(np.int64),
        items=items.astype(np.int64),
        values=values,
        timestamps=timestamps,
        num_users=int(unique_users.size),
        num_items=int(unique_items.size),
        feedback_kind=feedback_kind,
        user_ids=unique_users,
        item_ids=unique_items,
    )


def _parse_movielens(path):
    users, items, values, stamps = [], [], [], []
    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise DataError(f"{path}: line {lineno}: expected user::item::rating::timestamp")
            try:
                users.append(int(parts[0]))
                items.append(int(parts[1]))
                values.append(float(parts[2]))
                stamps.append(float(parts[3]))
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return users, items, values, stamps, "rating"


def _parse_csv_triplets(path):
    users, items, values, stamps = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:3] != ["user", "item", "value"]:
            raise DataError(f"{path}: line 1: expected header user,item,value[,timestamp]")
        has_time = len(header) > 3 and header[3] == "timestamp"
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                users.append(int(row[0]))
                items.append(int(row[1]))
                values.append(float(row[2]))
                stamps.append(float(row[3]) if has_time and len(row) > 3 else 0.0)
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return users, items, values, stamps, "rating"


_KUAIREC_USER_COLUMNS = ("user_id", "user")
_KUAIREC_ITEM_COLUMNS = ("video_id", "item_id", "item")
_KUAIREC_TIME_COLUMNS = ("timestamp", "time")


def _parse_kuairec(path):
    users, items, values, stamps = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        def find(names):
            for name in names:
                if name in header:
                    return header.index(name)
            return None
        u_col = find(_KUAIREC_USER_COLUMNS)
        i_col = find(_KUAIREC_ITEM_COLUMNS)
        r_col = find(("watch_ratio",))
        t_col = find(_KUAIREC_TIME_COLUMNS)
        if u_col is None or i_col is None or r_col is None:
            raise DataError(f"{path}: line 1: need user, video and watch_ratio columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                users.append(int(row[u_col]))
                items.append(int(row[i_col]))
                values.append(float(row[r_col]))
                stamps.append(float(row[t_col]) if t_col is not None else 0.0)
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return users, items, values, stamps, "watch_ratio"


def ingest(path, fmt: str) -> InteractionDataset:
    """Read an interaction file into a densely indexed dataset."""
    if fmt == "movielens_dat":
        parsed = _parse_movielens(path)
    elif fmt == "csv_triplets":
        parsed = _parse_csv_triplets(path)
    elif fmt == "kuairec_csv":
        parsed = _parse_kuairec(path)
    else:
        raise DataError(f"unknown dataset format {fmt!r}")
    users, items, values, stamps, kind = parsed
    if not users:
        raise DataError(f"{path}: no interaction records")
    return from_records(users, items, values, stamps, feedback_kind=kind)


def write_id_maps(dataset: InteractionDataset, path) -> None:
    """Emit the dense-index -> original-id bijection as CSV."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["kind", "dense_index", "original_id"])
        for idx, original in enumerate(dataset.user_ids):
            writer.writerow(["user", idx, original])
        for idx, original in enumerate(dataset.item_ids):
            writer.writerow(["item", idx, original])


def read_id_maps(path):
    """Inverse of :func:`write_id_maps`; returns (user_ids, item_ids) arrays."""
    users, items = [], []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row in reader:
            (users if row[0] == "user" else items).append(row[2])
    return np.asarray(users), np.asarray(items)


def filter_records(dataset: InteractionDataset, mask) -> InteractionDataset:
    """Subset of records with the index spaces (M, N) left unchanged."""
    mask = np.asarray(mask, dtype=bool)
    return InteractionDataset(
        users=dataset.users[mask],
        items=dataset.items[mask],
        values=dataset.values[mask],
        timestamps=dataset.timestamps[mask],
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        feedback_kind=dataset.feedback_kind,
        user_ids=dataset.user_ids,
        item_ids=dataset.item_ids,
    )


def exclude_users(dataset: InteractionDataset, users) -> InteractionDataset:
    """Drop all records of the given users (node indices stay valid)."""
    drop = np.isin(dataset.users, np.asarray(list(users), dtype=np.int64))
    return filter_records(dataset, ~drop)


def sample_mask(num_records: int, fraction: float, seed: int) -> np.ndarray:
    """Random boolean mask keeping floor(fraction * n) records."""
    if not 0.0 <= fraction <= 1.0:
        raise DataError(f"fraction {fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    keep = int(np.floor(fraction * num_records))
    mask = np.zeros(num_records, dtype=bool)
    mask[rng.permutation(num_records)[:keep]] = True
    return mask


def most_active_users(dataset: InteractionDataset, count: int) -> np.ndarray:
    """User indices with the most interactions, ties broken by index."""
    counts = dataset.interaction_counts()
    order = np.lexsort((np.arange(dataset.num_users), -counts))
    return order[:count]


def subsample_users(dataset: InteractionDataset, fraction: float, seed: int) -> InteractionDataset:
    """Keep a random user subset's records; index spaces unchanged."""
    if fraction >= 1.0:
        return dataset
    rng = np.random.default_rng(seed)
    keep = int(np.floor(fraction * dataset.num_users))
    kept = rng.permutation(dataset.num_users)[:keep]
    mask = np.isin(dataset.users, kept)
    return filter_records(dataset, mask)
