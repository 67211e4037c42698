"""Numerical self-checks for the embedding losses (used by ``losses-check``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    EmbeddingBatch,
    cross_entropy_loss,
    softmax_form_loss,
    triplet_loss,
    upper_bound_loss,
)

FD_STEP = 1e-5
GRAD_RTOL = 1e-4


def random_batch(rng: np.random.Generator, dim: int = 16, max_pos: int = 4, max_neg: int = 8, unit: bool = True):
    """Random anchor/positives/negatives; unit-norm rows unless ``unit`` is False."""
    n_pos = int(rng.integers(1, max_pos + 1))
    n_neg = int(rng.integers(1, max_neg + 1))
    v = rng.standard_normal((1 + n_pos + n_neg, dim))
    if unit:
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return EmbeddingBatch(v[0], v[1 : 1 + n_pos], v[1 + n_pos :])


def _flatten(batch: EmbeddingBatch) -> np.ndarray:
    return np.concatenate([batch.anchor, batch.positives.ravel(), batch.negatives.ravel()])


def _unflatten(x: np.ndarray, like: EmbeddingBatch) -> EmbeddingBatch:
    d = like.anchor.size
    p = like.positives.size
    return EmbeddingBatch(x[:d], x[d : d + p].reshape(-1, d), x[d + p :].reshape(-1, d))


def finite_difference(fn, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    grad = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        grad[k] = (fn(x + e) - fn(x - e)) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def embedding_grad_error(loss_fn, batch: EmbeddingBatch) -> float:
    g = loss_fn(batch)
    analytic = np.concatenate([g.d_anchor, g.d_positives.ravel(), g.d_negatives.ravel()])
    numeric = finite_difference(lambda x: loss_fn(_unflatten(x, batch)).value, _flatten(batch))
    return relative_error(analytic, numeric)


def worst_single_triplet(batch: EmbeddingBatch) -> float:
    """Largest single-negative hinge max(0, f.n_i - f.p) with the hardest positive."""
    p = float(np.min(batch.positives @ batch.anchor))
    return float(max(0.0, np.max(batch.negatives @ batch.anchor) - p))


def is_smooth_point(batch: EmbeddingBatch, margin: float = 1e-3) -> bool:
    """True when no hinge or hardest-positive choice sits within ``margin`` of a kink."""
    pos_dots = np.sort(batch.positives @ batch.anchor)
    if len(pos_dots) > 1 and pos_dots[1] - pos_dots[0] < margin:
        return False
    z = batch.negatives @ batch.anchor - pos_dots[0]
    return bool(np.all(np.abs(z) > margin))


def ce_grad_error(logits: np.ndarray, target: int) -> float:
    _, analytic = cross_entropy_loss(logits, target)
    numeric = finite_difference(lambda x: cross_entropy_loss(x, target)[0], logits)
    return relative_error(analytic, numeric)


@dataclass
class LossCheckReport:
    batches: int
    ordering_violations: int
    per_negative_violations: int
    nonnegative_violations: int
    max_identity_gap: float
    max_grad_error: dict[str, float]

    @property
    def ok(self) -> bool:
        return (
            self.ordering_violations == 0
            and self.nonnegative_violations == 0
            and self.max_identity_gap < 1e-12
            and all(v < GRAD_RTOL for v in self.max_grad_error.values())
        )


def run_loss_checks(n_batches: int = 10_000, n_grad: int = 100, seed: int = 0, dim: int = 16) -> LossCheckReport:
    rng = np.random.default_rng(seed)
    ordering = per_negative = nonneg = 0
    gap = 0.0
    for _ in range(n_batches):
        b = random_batch(rng, dim)
        t = triplet_loss(b).value
        u = upper_bound_loss(b).value
        nonneg += t < 0
        ordering += u < t
        per_negative += u < worst_single_triplet(b)
        gap = max(gap, abs(u - softmax_form_loss(b)))

    grad_err = {"triplet": 0.0, "upper_bound": 0.0, "cross_entropy": 0.0}
    done = 0
    while done < n_grad:
        b = random_batch(rng, dim)
        if not is_smooth_point(b):
            continue
        grad_err["triplet"] = max(grad_err["triplet"], embedding_grad_error(triplet_loss, b))
        grad_err["upper_bound"] = max(grad_err["upper_bound"], embedding_grad_error(upper_bound_loss, b))
        n_cls = int(rng.integers(2, 10))
        grad_err["cross_entropy"] = max(
            grad_err["cross_entropy"],
            ce_grad_error(rng.standard_normal(n_cls) * 2.0, int(rng.integers(n_cls))),
        )
        done += 1
    return LossCheckReport(n_batches, int(ordering), int(per_negative), int(nonneg), gap, grad_err)
