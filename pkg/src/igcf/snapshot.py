"""Binary persistence for variational embedding snapshots.

Layout: magic ``IGCF``, u32 format version, u64 num_users, u64
num_items, u64 dim, u64 depth, 8-byte zero-padded ASCII scheme tag,
then ``mu`` and ``rho`` as row-major little-endian float64 blocks of
shape (num_users + num_items, dim).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .pretrain import VariationalParams

MAGIC = b"IGCF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQQQ8s")


@dataclass(eq=False)
class Snapshot:
    num_users: int
    num_items: int
    dim: int
    depth: int
    scheme: str
    params: VariationalParams


def save_snapshot(path, params: VariationalParams, num_users: int,
                  num_items: int, depth: int, scheme: str) -> None:
    n = num_users + num_items
    if params.mu.shape != (n, params.mu.shape[1]):
        raise ValueError("params shape inconsistent with user/item counts")
    dim = params.mu.shape[1]
    tag = scheme.encode("ascii")
    if len(tag) > 8:
        raise ValueError(f"scheme tag {scheme!r} longer than 8 bytes")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, num_users, num_items,
                          dim, depth, tag.ljust(8, b"\x00"))
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(params.mu, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(params.rho, dtype="<f8").tobytes())


def load_snapshot(path) -> Snapshot:
    with open(path, "rb") as handle:
        raw = handle.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, m, n, dim, depth, tag = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        count = (m + n) * dim
        mu = np.frombuffer(handle.read(count * 8), dtype="<f8")
        rho = np.frombuffer(handle.read(count * 8), dtype="<f8")
        if mu.size != count or rho.size != count:
            raise ValueError(f"{path}: truncated payload")
    params = VariationalParams(
        mu.reshape(m + n, dim).copy(),
        rho.reshape(m + n, dim).copy(),
    )
    scheme = tag.rstrip(b"\x00").decode("ascii")
    return Snapshot(int(m), int(n), int(dim), int(depth), scheme, params)


def export_csv(path, snapshot: Snapshot) -> None:
    """Human-readable twin of the binary container."""
    dim = snapshot.dim
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["kind", "index"]
            + [f"mu_{j}" for j in range(dim)]
            + [f"rho_{j}" for j in range(dim)]
        )
        mu, rho = snapshot.params.mu, snapshot.params.rho
        for node in range(snapshot.num_users + snapshot.num_items):
            if node < snapshot.num_users:
                kind, index = "user", node
            else:
                kind, index = "item", node - snapshot.num_users
            writer.writerow(
                [kind, index]
                + [repr(v) for v in mu[node]]
                + [repr(v) for v in rho[node]]
            )
