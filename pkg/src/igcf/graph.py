"""Bipartite interaction graph and linear embedding propagation.

Users and items are the nodes of one undirected bipartite graph: user
nodes occupy indices ``[0, num_users)`` and item nodes occupy
``[num_users, num_users + num_items)``.  Embedding matrices are stored
node-major, shape ``(num_nodes, dim)``, row ``j`` holding the vector of
node ``j`` (user block first).

Propagation applies a polynomial in the normalized adjacency to an
embedding matrix.  The dense coefficient matrix is only ever formed by
:func:`materialize_coefficient_matrix`, which exists as a test oracle;
:func:`propagate` performs the same map with ``depth`` sparse products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SCHEMES = ("lightgcn", "sgcn", "appnp")

DENSE_NODE_CAP = 1000


@dataclass(frozen=True)
class PropagationSpec:
    """Scheme, depth and per-layer weights of the convolution.

    ``layer_weights`` applies to the lightgcn scheme only and defaults to
    the uniform choice 1/(depth+1).  ``teleport`` is the appnp restart
    probability in (0, 1].
    """

    scheme: str = "lightgcn"
    depth: int = 3
    layer_weights: tuple | None = None
    teleport: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown propagation scheme {self.scheme!r}")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.scheme == "lightgcn":
            weights = self.layer_weights
            if weights is None:
                weights = tuple([1.0 / (self.depth + 1)] * (self.depth + 1))
            else:
                weights = tuple(float(w) for w in weights)
            if len(weights) != self.depth + 1:
                raise ValueError(
                    f"need {self.depth + 1} layer weights, got {len(weights)}"
                )
            if any(w < 0.0 for w in weights):
                raise ValueError("layer weights must be nonnegative")
            object.__setattr__(self, "layer_weights", weights)
        elif self.layer_weights is not None:
            raise ValueError("layer_weights only applies to lightgcn")
        if self.scheme == "appnp":
            if self.teleport is None or not 0.0 < self.teleport <= 1.0:
                raise ValueError("appnp requires teleport in (0, 1]")
        elif self.teleport is not None:
            raise ValueError("teleport only applies to appnp")

    def coefficients(self) -> np.ndarray:
        """Weight of each power of the propagation operator (length depth+1).

        lightgcn: the layer weights; appnp: beta*(1-beta)^k; sgcn: the
        operator already carries self-loops, so only the top power counts.
        """
        if self.scheme == "lightgcn":
            return np.asarray(self.layer_weights, dtype=float)
        if self.scheme == "appnp":
            beta = float(self.teleport)
            return np.asarray(
                [beta * (1.0 - beta) ** k for k in range(self.depth + 1)]
            )
        coeffs = np.zeros(self.depth + 1)
        coeffs[-1] = 1.0
        return coeffs


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Deduplicated user-item edges plus per-node degrees."""

    num_users: int
    num_items: int
    user_index: np.ndarray
    item_index: np.ndarray
    degrees: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_edges(self) -> int:
        return int(self.user_index.size)


def build_graph(dataset) -> InteractionGraph:
    """Build the bipartite graph of observed interactions.

    Repeated (user, item) records collapse to a single edge.  Any record
    with an endpoint outside the dataset's index ranges is rejected.
    """
    users = np.asarray(dataset.users, dtype=np.int64)
    items = np.asarray(dataset.items, dtype=np.int64)
    m, n = int(dataset.num_users), int(dataset.num_items)
    bad = (users < 0) | (users >= m) | (items < 0) | (items >= n)
    if bad.any():
        pos = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"record {pos} has out-of-range endpoint "
            f"(user={users[pos]}, item={items[pos]}, M={m}, N={n})"
        )
    if users.size:
        key = users * n + items
        unique = np.unique(key)
        edge_users = unique // n
        edge_items = unique % n
    else:
        edge_users = np.zeros(0, dtype=np.int64)
        edge_items = np.zeros(0, dtype=np.int64)
    degrees = np.zeros(m + n, dtype=np.int64)
    degrees[:m] = np.bincount(edge_users, minlength=m)
    degrees[m:] = np.bincount(edge_items, minlength=n)
    return InteractionGraph(m, n, edge_users, edge_items, degrees)


def _bipartite_coo(graph: InteractionGraph):
    """Row/column indices of both directions of every edge."""
    m = graph.num_users
    rows = np.concatenate([graph.user_index, graph.item_index + m])
    cols = np.concatenate([graph.item_index + m, graph.user_index])
    return rows, cols


def normalized_adjacency(graph: InteractionGraph) -> sp.csr_matrix:
    """Symmetrically degree-normalized adjacency.

    Entry (j, l) of an edge is 1/sqrt(deg_j * deg_l); rows and columns of
    isolated nodes are all zero (convention 1/sqrt(0) = 0).
    """
    n = graph.num_nodes
    rows, cols = _bipartite_coo(graph)
    inv_sqrt = np.zeros(n)
    np.divide(1.0, np.sqrt(graph.degrees), out=inv_sqrt, where=graph.degrees > 0)
    data = inv_sqrt[rows] * inv_sqrt[cols]
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def self_loop_adjacency(graph: InteractionGraph) -> sp.csr_matrix:
    """Self-loop-augmented normalized adjacency used by the sgcn scheme."""
    n = graph.num_nodes
    rows, cols = _bipartite_coo(graph)
    diag = np.arange(n)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    inv_sqrt = 1.0 / np.sqrt(graph.degrees + 1.0)
    data = inv_sqrt[rows] * inv_sqrt[cols]
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def propagation_operator(graph: InteractionGraph, spec: PropagationSpec) -> sp.csr_matrix:
    """The sparse matrix whose powers the scheme combines."""
    if spec.scheme == "sgcn":
        return self_loop_adjacency(graph)
    return normalized_adjacency(graph)


def propagate(embeddings: np.ndarray, operator: sp.csr_matrix,
              spec: PropagationSpec) -> np.ndarray:
    """Apply the convolution to a node-major embedding matrix.

    Equals ``materialize_coefficient_matrix(operator, spec) @ embeddings``
    but runs ``depth`` sparse products instead of forming the dense matrix.
    """
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2 or x.shape[0] != operator.shape[0]:
        raise ValueError(
            f"embeddings shape {x.shape} does not match {operator.shape[0]} nodes"
        )
    coeffs = spec.coefficients()
    out = coeffs[0] * x
    current = x
    for c in coeffs[1:]:
        current = operator @ current
        if c != 0.0:
            out = out + c * current
    return out


def materialize_coefficient_matrix(operator: sp.csr_matrix, spec: PropagationSpec,
                                   max_nodes: int = DENSE_NODE_CAP) -> np.ndarray:
    """Dense coefficient matrix; test-oracle use only, capped in size."""
    n = operator.shape[0]
    if n > max_nodes:
        raise ValueError(f"{n} nodes exceeds dense cap {max_nodes}")
    dense = operator.toarray()
    coeffs = spec.coefficients()
    out = coeffs[0] * np.eye(n)
    power = np.eye(n)
    for c in coeffs[1:]:
        power = power @ dense
        out += c * power
    return out


def coefficient_columns(operator: sp.csr_matrix, spec: PropagationSpec,
                        nodes: np.ndarray) -> np.ndarray:
    """Columns of the coefficient matrix for the given nodes, shape (n, len(nodes)).

    Lets callers evaluate the convolution at a few nodes without touching
    the full embedding matrix: final rows = columns.T @ embeddings (the
    operator is symmetric, so rows and columns agree).
    """
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    n = operator.shape[0]
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise IndexError(f"node index out of range [0, {n})")
    block = np.zeros((n, nodes.size))
    block[nodes, np.arange(nodes.size)] = 1.0
    coeffs = spec.coefficients()
    out = coeffs[0] * block
    current = block
    for c in coeffs[1:]:
        current = operator @ current
        if c != 0.0:
            out = out + c * current
    return out


def node_final_embedding(embeddings: np.ndarray, operator: sp.csr_matrix,
                         spec: PropagationSpec, node: int) -> np.ndarray:
    """Final (propagated) vector of a single node."""
    n = operator.shape[0]
    if not 0 <= node < n:
        raise IndexError(f"node {node} out of range [0, {n})")
    column = coefficient_columns(operator, spec, np.asarray([node]))
    return column[:, 0] @ np.asarray(embeddings, dtype=float)


def final_embeddings_at(embeddings: np.ndarray, operator: sp.csr_matrix,
                        spec: PropagationSpec, nodes: np.ndarray) -> np.ndarray:
    """Propagated vectors of a node subset, shape (len(nodes), dim)."""
    columns = coefficient_columns(operator, spec, nodes)
    return columns.T @ np.asarray(embeddings, dtype=float)
