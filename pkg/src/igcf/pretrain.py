"""Variational pretraining of Gaussian user/item embeddings.

Every node carries a diagonal-Gaussian belief with mean ``mu`` and
pointwise scale ``softplus(rho)``.  Training minimizes the negative
evidence bound of the chosen feedback model with reparameterized
stochastic gradients: one fresh standard-normal noise matrix per batch,
plain SGD steps, zero initialization.

Predicted scores use propagated (final) embeddings, so gradients flow
back through the graph convolution; because the convolution is linear
and symmetric, the backward pass is one more application of
:func:`igcf.graph.propagate`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .graph import (
    build_graph,
    coefficient_columns,
    propagate,
    propagation_operator,
)

FEEDBACK_KINDS = ("continuous", "binary")


class NumericalError(Exception):
    """Training produced a non-finite loss."""


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(eq=False)
class VariationalParams:
    """Per-node variational mean and pre-scale, node-major (M+N, d)."""

    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.rho.shape:
            raise ValueError("mu and rho must have identical shape")

    @property
    def scale(self) -> np.ndarray:
        return softplus(self.rho)

    def copy(self) -> "VariationalParams":
        return VariationalParams(self.mu.copy(), self.rho.copy())


def init_params(num_users: int, num_items: int, dim: int) -> VariationalParams:
    """All-zero initialization (scale starts at softplus(0) = ln 2)."""
    if dim < 1 or num_users < 0 or num_items < 0:
        raise ValueError("dimensions must be positive")
    shape = (num_users + num_items, dim)
    return VariationalParams(np.zeros(shape), np.zeros(shape))


def sample_embeddings(params: VariationalParams, noise: np.ndarray) -> np.ndarray:
    """Reparameterized sample: mu + softplus(rho) * noise, elementwise."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape != params.mu.shape:
        raise ValueError(
            f"noise shape {noise.shape} does not match params {params.mu.shape}"
        )
    return params.mu + params.scale * noise


@dataclass(frozen=True)
class PretrainConfig:
    dim: int = 16
    prior_variance: float = 1.0
    noise_variance: float = 1.0
    feedback: str = "continuous"
    learning_rate: float = 0.1
    batch_size: int = 512
    max_epochs: int = 500
    convergence_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.prior_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("variances must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.feedback not in FEEDBACK_KINDS:
            raise ValueError(f"unknown feedback kind {self.feedback!r}")

    def short_hash(self) -> str:
        text = repr(sorted(self.__dict__.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(eq=False)
class TrainingContext:
    """Graph operator plus the scalars the losses need."""

    operator: object
    spec: object
    num_users: int
    num_items: int
    num_records: int
    prior_variance: float
    noise_variance: float


class LossResult(NamedTuple):
    total: float
    data_term: float
    reg_term: float
    grad_mu: np.ndarray
    grad_rho: np.ndarray


def _batch_final_vectors(embeddings, ctx, nodes):
    """Final embeddings of the batch's nodes.

    Uses coefficient columns when the batch touches fewer nodes than the
    embedding has dimensions (cheaper), full propagation otherwise.  Both
    paths are exact; ``columns`` is reused by the backward pass.
    """
    if nodes.size < embeddings.shape[1]:
        columns = coefficient_columns(ctx.operator, ctx.spec, nodes)
        return columns.T @ embeddings, columns
    full = propagate(embeddings, ctx.operator, ctx.spec)
    return full[nodes], None


def _elbo_loss(params, noise, batch, ctx, kind, reg_scale):
    """Loss value and analytic gradients w.r.t. (mu, rho) for one batch.

    The regularization (prior + entropy) terms run over every node and are
    scaled by ``reg_scale`` (default |batch| / num_records) so that one
    epoch of batches sums to the full objective.  Divergence surfaces as a
    non-finite loss value, never as a raised warning.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _elbo_loss_inner(params, noise, batch, ctx, kind, reg_scale)


def _elbo_loss_inner(params, noise, batch, ctx, kind, reg_scale):
    batch_users, batch_items, batch_values = (np.asarray(a) for a in batch)
    embeddings = sample_embeddings(params, noise)
    if reg_scale is None:
        if ctx.num_records > 0:
            reg_scale = batch_users.size / ctx.num_records
        else:
            reg_scale = 1.0

    scale = params.scale
    prior = float((embeddings * embeddings).sum()) / (2.0 * ctx.prior_variance)
    entropy = -0.5 * float(np.log(scale).sum())
    reg_term = prior + entropy

    if batch_users.size:
        user_nodes = batch_users.astype(np.int64)
        item_nodes = batch_items.astype(np.int64) + ctx.num_users
        nodes, positions = np.unique(
            np.concatenate([user_nodes, item_nodes]), return_inverse=True
        )
        pos_users = positions[: user_nodes.size]
        pos_items = positions[user_nodes.size:]
        finals, columns = _batch_final_vectors(embeddings, ctx, nodes)
        f_users = finals[pos_users]
        f_items = finals[pos_items]
        scores = np.einsum("ij,ij->i", f_users, f_items)

        if kind == "continuous":
            residual = (scores - batch_values) / ctx.noise_variance
            data_term = float(((batch_values - scores) ** 2).sum()) / (
                2.0 * ctx.noise_variance
            )
            dscore = residual
        else:
            signs = 2.0 * batch_values - 1.0
            margins = signs * scores
            data_term = float(np.logaddexp(0.0, -margins).sum())
            dscore = -signs * expit(-margins)

        grad_finals = np.zeros_like(finals)
        np.add.at(grad_finals, pos_users, dscore[:, None] * f_items)
        np.add.at(grad_finals, pos_items, dscore[:, None] * f_users)
        if columns is not None:
            grad_data = columns @ grad_finals
        else:
            scattered = np.zeros_like(embeddings)
            scattered[nodes] = grad_finals
            grad_data = propagate(scattered, ctx.operator, ctx.spec)
    else:
        data_term = 0.0
        grad_data = np.zeros_like(embeddings)

    total = data_term + reg_scale * reg_term
    grad_embeddings = grad_data + (reg_scale / ctx.prior_variance) * embeddings
    sigmoid_rho = expit(params.rho)
    grad_mu = grad_embeddings
    grad_rho = (
        grad_embeddings * noise * sigmoid_rho
        - reg_scale * 0.5 * sigmoid_rho / scale
    )
    return LossResult(total, data_term, reg_scale * reg_term, grad_mu, grad_rho)


def loss_continuous(params, noise, batch, ctx, reg_scale=None) -> LossResult:
    """Squared-error feedback loss plus prior/entropy terms, with gradients."""
    return _elbo_loss(params, noise, batch, ctx, "continuous", reg_scale)


def loss_binary(params, noise, batch, ctx, reg_scale=None) -> LossResult:
    """Logistic feedback loss (labels in {0,1}) plus prior/entropy terms."""
    return _elbo_loss(params, noise, batch, ctx, "binary", reg_scale)


@dataclass(eq=False)
class PretrainedModel:
    """Posterior means, scales, and fixed final item vectors."""

    phi_star: np.ndarray
    rho_star: np.ndarray
    scale_star: np.ndarray
    user_vectors: np.ndarray
    item_vectors: np.ndarray
    spec: object
    num_users: int
    num_items: int
    provenance: str


def export_item_vectors(model: PretrainedModel) -> np.ndarray:
    """Final item vectors, one row per item, fixed for the online phase."""
    return model.item_vectors.copy()


def make_context(dataset, spec, config, graph=None) -> TrainingContext:
    graph = build_graph(dataset) if graph is None else graph
    return TrainingContext(
        operator=propagation_operator(graph, spec),
        spec=spec,
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        num_records=len(dataset),
        prior_variance=config.prior_variance,
        noise_variance=config.noise_variance,
    )


def pretrain(dataset, spec, config: PretrainConfig, graph=None) -> PretrainedModel:
    """Fit the variational posteriors by mini-batch SGD until convergence.

    Stops when the relative change of the epoch loss drops below
    ``convergence_tol`` or after ``max_epochs``.  Deterministic for a
    fixed seed.
    """
    ctx = make_context(dataset, spec, config, graph=graph)
    params = init_params(dataset.num_users, dataset.num_items, config.dim)
    rng = np.random.default_rng(config.seed)
    users = dataset.users
    items = dataset.items
    if config.feedback == "continuous":
        targets = dataset.values.astype(float)
    else:
        targets = dataset.satisfied.astype(float)
    kind = config.feedback
    n = users.size

    previous = None
    for epoch in range(config.max_epochs):
        if n == 0:
            break
        order = rng.permutation(n)
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            noise = rng.standard_normal(params.mu.shape)
            result = _elbo_loss(
                params, noise,
                (users[idx], items[idx], targets[idx]),
                ctx, kind, None,
            )
            if not np.isfinite(result.total):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            params.mu -= config.learning_rate * result.grad_mu
            params.rho -= config.learning_rate * result.grad_rho
            epoch_loss += result.total
        if previous is not None:
            change = abs(previous - epoch_loss) / max(1.0, abs(previous))
            if change < config.convergence_tol:
                break
        previous = epoch_loss

    phi = params.mu.copy()
    finals = propagate(phi, ctx.operator, ctx.spec)
    provenance = f"{config.short_hash()}:{dataset.fingerprint()[:16]}"
    return PretrainedModel(
        phi_star=phi,
        rho_star=params.rho.copy(),
        scale_star=params.scale,
        user_vectors=finals[:dataset.num_users],
        item_vectors=finals[dataset.num_users:],
        spec=spec,
        num_users=dataset.num_users,
        num_items=dataset.num_items,
        provenance=provenance,
    )
