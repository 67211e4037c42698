"""Association costs and the rectangular assignment solver.

Costs are non-negative floats; ``INFEASIBLE`` (``inf``) marks a pair that
may never be matched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError

INFEASIBLE = np.inf

DEFAULT_LAMBDA = 0.9
DEFAULT_MAX_COST = 0.7


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total_cost(self, cost: np.ndarray) -> float:
        return math.fsum(float(cost[r, c]) for r, c in self.matches)

    @classmethod
    def from_matches(cls, matches, n_rows: int, n_cols: int) -> "Assignment":
        matches = sorted((int(r), int(c)) for r, c in matches)
        rows = {r for r, _ in matches}
        cols = {c for _, c in matches}
        return cls(
            matches,
            [r for r in range(n_rows) if r not in rows],
            [c for c in range(n_cols) if c not in cols],
        )


def _as_embeddings(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2:
        raise DomainError(f"{name} must be a list of vectors")
    return x


def appearance_cost(track_embs, det_embs) -> np.ndarray:
    """Cosine distance 1 - cos(e_i, f_j) for every track/detection pair."""
    a = _as_embeddings(track_embs, "track embeddings")
    b = _as_embeddings(det_embs, "detection embeddings")
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"embedding dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise DomainError("zero-norm embedding")
    cos = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(1.0 - cos, 0.0, 2.0)


def motion_cost(gating, gate: float) -> np.ndarray:
    """Normalise squared Mahalanobis distances by ``gate``; beyond it is infeasible."""
    if not gate > 0:
        raise DomainError("gate must be positive")
    d2 = np.asarray(gating, dtype=float)
    if np.any(d2 < 0):
        raise DomainError("gating distances must be non-negative")
    out = np.clip(d2 / gate, 0.0, 1.0)
    out[d2 > gate] = INFEASIBLE
    return out


def fuse_costs(a_e, a_m, lam: float) -> np.ndarray:
    """lam * a_e + (1 - lam) * a_m, keeping infeasibility from either side."""
    a_e = np.asarray(a_e, dtype=float)
    a_m = np.asarray(a_m, dtype=float)
    if a_e.shape != a_m.shape:
        raise DomainError(f"cost shapes differ: {a_e.shape} vs {a_m.shape}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError("lambda must lie in [0, 1]")
    blocked = np.isinf(a_e) | np.isinf(a_m)
    with np.errstate(invalid="ignore"):
        fused = lam * np.where(blocked, 0.0, a_e) + (1.0 - lam) * np.where(blocked, 0.0, a_m)
    fused[blocked] = INFEASIBLE
    return fused


def solve_assignment(cost, max_cost: float = np.inf) -> Assignment:
    """Maximum-cardinality, minimum-cost matching over the feasible pairs.

    A pair is feasible when its cost is finite and ``<= max_cost``. Among
    matchings with the largest number of feasible pairs the total cost is
    minimised. Implemented by padding to a square problem where every row
    and column has a private "stay unmatched" slot priced high enough that
    giving up a match never pays off.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise DomainError("cost must be a 2-D matrix")
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)))
    feasible = np.isfinite(c) & (c <= max_cost)
    if not feasible.any():
        return Assignment([], list(range(n)), list(range(m)))
    if np.any(c[feasible] < 0):
        raise DomainError("costs must be non-negative")

    c_max = float(c[feasible].max())
    unmatched_price = min(n, m) * c_max + 1.0
    size = n + m
    big = np.full((size, size), INFEASIBLE)
    big[:n, :m] = np.where(feasible, c, INFEASIBLE)
    big[np.arange(n), m + np.arange(n)] = unmatched_price
    big[n + np.arange(m), np.arange(m)] = unmatched_price
    big[n:, m:] = 0.0
    rows, cols = linear_sum_assignment(big)
    matches = [(r, k) for r, k in zip(rows, cols) if r < n and k < m]
    return Assignment.from_matches(matches, n, m)
