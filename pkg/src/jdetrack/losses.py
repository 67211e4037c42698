"""Embedding losses and multi-task loss weighting, with analytic gradients.

Every embedding loss works on one anchor ``f`` with a set of positives and
negatives; similarity is the plain dot product (no margin). The hardest
positive, the one with the lowest dot product with the anchor, is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError

TASKS = ("cls", "box", "emb")  # the classification, box regression and embedding losses
IGNORE_ID = -1


@dataclass
class EmbeddingBatch:
    anchor: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float).ravel()
        d = self.anchor.size
        self.positives = np.asarray(self.positives, dtype=float).reshape(-1, d)
        self.negatives = np.asarray(self.negatives, dtype=float).reshape(-1, d)
        if len(self.positives) == 0:
            raise DomainError("need at least one positive")

    @classmethod
    def from_labeled(cls, embeddings, labels, anchor_index: int) -> "EmbeddingBatch":
        """Split a labelled mini-batch around one anchor.

        Samples labelled -1 (box annotated, identity unknown) are dropped.
        """
        emb = np.asarray(embeddings, dtype=float)
        labels = np.asarray(labels)
        anchor_label = labels[anchor_index]
        if anchor_label == IGNORE_ID:
            raise DomainError("anchor has no identity label")
        idx = np.arange(len(labels))
        keep = (labels != IGNORE_ID) & (idx != anchor_index)
        return cls(
            emb[anchor_index],
            emb[keep & (labels == anchor_label)],
            emb[keep & (labels != anchor_label)],
        )

    def hardest_positive(self) -> int:
        return int(np.argmin(self.positives @ self.anchor))


@dataclass
class LossGrad:
    """A loss value with gradients for the anchor, positives and negatives."""

    value: float
    d_anchor: np.ndarray
    d_positives: np.ndarray
    d_negatives: np.ndarray


def _pair_terms(batch: EmbeddingBatch):
    k = batch.hardest_positive()
    pos = batch.positives[k]
    neg_dots = batch.negatives @ batch.anchor
    return k, pos, neg_dots, float(pos @ batch.anchor)


def _assemble(batch, k, pos, weights, value) -> LossGrad:
    """Gradients of sum_i w_i * (f.n_i - f.p) given per-negative weights."""
    f = batch.anchor
    d_anchor = weights @ batch.negatives - weights.sum() * pos
    d_pos = np.zeros_like(batch.positives)
    d_pos[k] = -weights.sum() * f
    d_neg = weights[:, None] * f[None, :]
    return LossGrad(float(value), d_anchor, d_pos, d_neg)


def triplet_loss(batch: EmbeddingBatch) -> LossGrad:
    """sum_i max(0, f.n_i - f.p) over all negatives and the hardest positive."""
    if len(batch.negatives) == 0:
        raise DomainError("need at least one negative")
    k, pos, neg_dots, pos_dot = _pair_terms(batch)
    margins = neg_dots - pos_dot
    active = (margins > 0).astype(float)
    return _assemble(batch, k, pos, active, np.sum(np.maximum(margins, 0.0)))


def upper_bound_loss(batch: EmbeddingBatch) -> LossGrad:
    """log(1 + sum_i exp(f.n_i - f.p)), the smooth bound on :func:`triplet_loss`."""
    if len(batch.negatives) == 0:
        raise DomainError("need at least one negative")
    k, pos, neg_dots, pos_dot = _pair_terms(batch)
    z = np.r_[0.0, neg_dots - pos_dot]
    value = logsumexp(z)
    weights = np.exp(z[1:] - value)
    return _assemble(batch, k, pos, weights, value)


def softmax_form_loss(batch: EmbeddingBatch) -> float:
    """-log softmax of the positive logit among {f.p} and {f.n_i}."""
    if len(batch.negatives) == 0:
        raise DomainError("need at least one negative")
    _, _, neg_dots, pos_dot = _pair_terms(batch)
    logits = np.r_[pos_dot, neg_dots]
    return float(logsumexp(logits) - pos_dot)


def cross_entropy_loss(logits, target: int) -> tuple[float, np.ndarray]:
    """Softmax negative log-likelihood and its gradient (softmax - one_hot)."""
    z = np.asarray(logits, dtype=float).ravel()
    if z.size < 2:
        raise DomainError("need at least two classes")
    if not 0 <= target < z.size:
        raise DomainError(f"target {target} out of range for {z.size} classes")
    lse = logsumexp(z)
    grad = np.exp(z - lse)
    grad[target] -= 1.0
    return float(lse - z[target]), grad


def proxy_cross_entropy(f, class_weights, target: int):
    """Cross-entropy with class-weight proxies: logits are ``class_weights @ f``.

    Returns (value, d_f, d_class_weights).
    """
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(class_weights, dtype=float)
    value, d_logits = cross_entropy_loss(g @ f, target)
    return value, g.T @ d_logits, np.outer(d_logits, f)


@dataclass
class TaskLossSet:
    """Per-head task losses, shape (M, 3) with columns ordered as ``TASKS``."""

    losses: np.ndarray
    weights: np.ndarray | None = None
    log_vars: np.ndarray | None = None

    def __post_init__(self):
        self.losses = np.atleast_2d(np.asarray(self.losses, dtype=float))
        if self.losses.shape[0] < 1:
            raise DomainError("need at least one prediction head")
        if not np.all(np.isfinite(self.losses)):
            raise DomainError("losses must be finite")
        for name in ("weights", "log_vars"):
            v = getattr(self, name)
            if v is not None:
                v = np.broadcast_to(np.asarray(v, dtype=float), self.losses.shape).copy()
                setattr(self, name, v)


def _check_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")


def weighted_total_loss(losses, weights) -> float:
    """sum over heads and tasks of w * L. All-ones weights is the Uniform baseline."""
    losses = np.atleast_2d(np.asarray(losses, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    _check_shape(losses, weights)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise DomainError("weights must be finite and non-negative")
    return float(np.sum(weights * losses))


def uniform_weights(n_heads: int) -> np.ndarray:
    return np.ones((n_heads, len(TASKS)))


def app_opt_weights(w_detection: float, w_embedding: float, n_heads: int) -> np.ndarray:
    """Two-parameter weights: cls and box share a weight, all heads are equal."""
    row = np.array([w_detection, w_detection, w_embedding], dtype=float)
    return np.tile(row, (n_heads, 1))


def validate_app_opt(weights, atol: float = 0.0) -> None:
    """Raise unless cls/box weights agree per head and every head is identical."""
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    if w.shape[1] != len(TASKS):
        raise DomainError("weights need one column per task")
    if not np.allclose(w[:, 0], w[:, 1], rtol=0, atol=atol):
        raise DomainError("classification and box weights must be equal")
    if not np.allclose(w, w[0], rtol=0, atol=atol):
        raise DomainError("weights must be shared across prediction heads")


def uncertainty_total_loss(losses, log_vars) -> tuple[float, np.ndarray]:
    """sum of 0.5 * (exp(-s) * L + s) and its gradient with respect to s."""
    losses = np.atleast_2d(np.asarray(losses, dtype=float))
    s = np.atleast_2d(np.asarray(log_vars, dtype=float))
    _check_shape(losses, s)
    scaled = np.exp(-s) * losses
    return float(0.5 * np.sum(scaled + s)), 0.5 * (1.0 - scaled)


def optimal_log_vars(losses) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form minimiser s* = log L and the per-term minimum 0.5 * (1 + log L)."""
    losses = np.asarray(losses, dtype=float)
    if np.any(losses <= 0):
        raise DomainError("closed-form optimum needs positive losses")
    s = np.log(losses)
    return s, 0.5 * (1.0 + s)


def loss_norm_weights(averages) -> np.ndarray:
    avg = np.asarray(averages, dtype=float)
    if np.any(avg <= 0):
        raise DomainError("moving averages must be positive")
    return 1.0 / avg


@dataclass
class LossNormWeighter:
    """Weights each task by the reciprocal of its exponential moving average."""

    momentum: float = 0.99
    averages: np.ndarray | None = field(default=None)

    def update(self, losses) -> np.ndarray:
        losses = np.asarray(losses, dtype=float)
        if self.averages is None:
            self.averages = losses.copy()
        else:
            _check_shape(self.averages, losses)
            self.averages = self.momentum * self.averages + (1.0 - self.momentum) * losses
        return self.weights()

    def weights(self) -> np.ndarray:
        if self.averages is None:
            raise DomainError("no losses observed yet")
        return loss_norm_weights(self.averages)
