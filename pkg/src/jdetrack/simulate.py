"""Synthetic scenarios and brute-force oracles.

Randomness: numpy's PCG64 bit generator seeded through ``SeedSequence``.
The scenario seed is expanded with ``SeedSequence(seed).spawn(6)`` into six
independent streams, used in this order:

    0  target initial state (size, position, velocity)
    1  identity embedding means and the background mean
    2  miss decisions
    3  box jitter
    4  false positives (count, boxes, confidences)
    5  embedding noise and detection confidences

Each stream is consumed in a fixed order (frame by frame, target by target),
so a given seed reproduces the same scenario on any platform numpy supports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .association import INFEASIBLE, Assignment
from .errors import DomainError, UsageError
from .geometry import Box, iou
from .sequence import SequenceResult
from .tracker import Detection

N_STREAMS = 6
MAX_INJECTIONS = 5_000_000


@dataclass
class ScenarioConfig:
    n_frames: int = 100
    n_targets: int = 5
    width: float = 1280.0
    height: float = 720.0
    min_speed: float = 0.5
    max_speed: float = 3.0
    min_box_height: float = 80.0
    max_box_height: float = 160.0
    p_miss: float = 0.0
    fp_rate: float = 0.0
    box_jitter_std: float = 0.0
    embed_dim: int = 128
    embed_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 0 or self.n_targets < 0:
            raise DomainError("frame and target counts must be non-negative")
        if not 0.0 <= self.p_miss < 1.0:
            raise DomainError("p_miss must lie in [0, 1)")
        if self.fp_rate < 0 or self.box_jitter_std < 0 or self.embed_noise_std < 0:
            raise DomainError("rates and noise levels must be non-negative")
        if not 0 <= self.min_speed <= self.max_speed:
            raise DomainError("need 0 <= min_speed <= max_speed")
        if not 0 < self.min_box_height <= self.max_box_height:
            raise DomainError("need 0 < min_box_height <= max_box_height")
        if self.max_box_height >= self.height or self.max_box_height / 3.0 >= self.width:
            raise DomainError("boxes must fit inside the arena")
        if self.embed_dim < 1:
            raise DomainError("embed_dim must be >= 1")


@dataclass
class Scenario:
    config: ScenarioConfig
    gt: SequenceResult
    frames: list[list[Detection]]
    det_ids: list[list[int]]  # ground-truth id per detection, -1 for false positives
    identity_means: np.ndarray

    @property
    def frame_indices(self) -> list[int]:
        return list(range(1, len(self.frames) + 1))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _reflect(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    if pos < lo:
        return 2 * lo - pos, -vel
    if pos > hi:
        return 2 * hi - pos, -vel
    return pos, vel


def _noisy_embedding(mean: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    v = mean + std * rng.standard_normal(mean.shape)
    n = np.linalg.norm(v)
    return mean.copy() if n == 0 else v / n


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Constant-velocity targets reflecting off the arena walls, observed
    through independent drops, gaussian jitter and uniform false positives."""
    streams = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(cfg.seed).spawn(N_STREAMS)]
    r_init, r_emb, r_miss, r_jit, r_fp, r_noise = streams

    n = cfg.n_targets
    heights = r_init.uniform(cfg.min_box_height, cfg.max_box_height, n)
    widths = heights / 3.0
    xs = r_init.uniform(0, cfg.width - widths)
    ys = r_init.uniform(0, cfg.height - heights)
    speed = r_init.uniform(cfg.min_speed, cfg.max_speed, n)
    angle = r_init.uniform(0, 2 * math.pi, n)
    vx, vy = speed * np.cos(angle), speed * np.sin(angle)

    means = _unit(r_emb.standard_normal((n, cfg.embed_dim))) if n else np.zeros((0, cfg.embed_dim))
    background = _unit(r_emb.standard_normal(cfg.embed_dim))

    gt_rows, frames, det_ids = [], [], []
    for t in range(cfg.n_frames):
        frame = t + 1
        dets, ids = [], []
        for k in range(n):
            if t > 0:
                xs[k], vx[k] = _reflect(xs[k] + vx[k], vx[k], 0.0, cfg.width - widths[k])
                ys[k], vy[k] = _reflect(ys[k] + vy[k], vy[k], 0.0, cfg.height - heights[k])
            box = Box(float(xs[k]), float(ys[k]), float(widths[k]), float(heights[k]))
            gt_rows.append((frame, k + 1, box))
            dropped = r_miss.random() < cfg.p_miss
            jitter = r_jit.standard_normal(4) * cfg.box_jitter_std
            emb = _noisy_embedding(means[k], cfg.embed_noise_std, r_noise)
            conf = r_noise.uniform(0.6, 1.0)
            if dropped:
                continue
            w = max(box.w + jitter[2], 1.0)
            h = max(box.h + jitter[3], 1.0)
            dets.append(Detection(Box(box.x + jitter[0], box.y + jitter[1], w, h), conf, emb))
            ids.append(k + 1)
        for _ in range(r_fp.poisson(cfg.fp_rate)):
            h = r_fp.uniform(cfg.min_box_height, cfg.max_box_height)
            w = h / 3.0
            box = Box(r_fp.uniform(0, cfg.width - w), r_fp.uniform(0, cfg.height - h), w, h)
            conf = r_fp.uniform(0.5, 1.0)
            dets.append(Detection(box, conf, _noisy_embedding(background, max(cfg.embed_noise_std, 0.05), r_noise)))
            ids.append(-1)
        frames.append(dets)
        det_ids.append(ids)
    return Scenario(cfg, SequenceResult(gt_rows), frames, det_ids, means)


def crossing_scenario(
    n_frames: int = 80,
    speed: float = 3.0,
    box_height: float = 120.0,
    jitter: float = 2.0,
    embed_dim: int = 128,
    embed_noise_std: float = 0.05,
    occlusion_iou: float = 0.3,
    bounce: bool = False,
    seed: int = 0,
) -> Scenario:
    """Two targets walking towards each other along nearly the same line.

    While their boxes overlap by more than ``occlusion_iou`` the target in
    the back (id 2) is not detected. By default the paths cross and both
    targets walk on; with ``bounce`` they turn back at the meeting point,
    which a constant-velocity motion model cannot anticipate.
    """
    rng_jit, rng_emb, rng_noise = (
        np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3)
    )
    w = box_height / 3.0
    meet = n_frames // 2
    centre = 640.0
    means = _unit(rng_emb.standard_normal((2, embed_dim)))
    gt_rows, frames, det_ids = [], [], []
    for t in range(n_frames):
        frame = t + 1
        offset = speed * (abs(meet - t) if bounce else meet - t)
        xs = (centre - w / 2 - offset, centre - w / 2 + offset)
        boxes = [Box(xs[0], 300.0, w, box_height), Box(xs[1], 306.0, w, box_height)]
        overlap = iou(boxes[0], boxes[1])
        dets, ids = [], []
        for k, box in enumerate(boxes):
            gt_rows.append((frame, k + 1, box))
            j = rng_jit.standard_normal(4) * jitter
            emb = _noisy_embedding(means[k], embed_noise_std, rng_noise)
            if k == 1 and overlap > occlusion_iou:
                continue
            dets.append(Detection(Box(box.x + j[0], box.y + j[1], box.w + j[2], box.h + j[3]), 0.9, emb))
            ids.append(k + 1)
        frames.append(dets)
        det_ids.append(ids)
    cfg = ScenarioConfig(n_frames=n_frames, n_targets=2, embed_dim=embed_dim,
                         box_jitter_std=jitter, embed_noise_std=embed_noise_std, seed=seed)
    return Scenario(cfg, SequenceResult(gt_rows), frames, det_ids, means)


def brute_force_assignment(cost, max_cost: float = np.inf) -> Assignment:
    """Exhaustive oracle for :func:`jdetrack.association.solve_assignment`.

    Enumerates every injective map of the smaller side into the larger one;
    a map's matching is its feasible pairs. Picks the largest matching, then
    the lowest total cost, then the lexicographically smallest pair list.
    """
    c = np.asarray(cost, dtype=float)
    n, m = c.shape
    if min(n, m) > 8:
        raise UsageError("brute force limited to min(rows, cols) <= 8")
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)))
    transposed = n > m
    if transposed:
        c = c.T
        n, m = m, n
    if math.perm(m, n) > MAX_INJECTIONS:
        raise UsageError(f"{math.perm(m, n)} injections exceed the enumeration budget")

    feasible = np.isfinite(c) & (c <= max_cost)
    perms = np.array(list(itertools.permutations(range(m), n)), dtype=int)
    rows = np.arange(n)
    ok = feasible[rows, perms]  # (P, n)
    card = ok.sum(axis=1)
    costs = np.where(ok, np.where(feasible, c, 0.0)[rows, perms], 0.0)
    # sequential left-to-right sum, the same order Assignment.total_cost uses
    totals = np.zeros(len(perms))
    for k in range(n):
        totals = totals + costs[:, k]
    best_card = card.max()
    cand = np.nonzero(card == best_card)[0]
    best_total = totals[cand].min()
    cand = cand[totals[cand] == best_total]

    def pairs(p):
        chosen = [(int(r), int(perms[p, r])) for r in range(n) if ok[p, r]]
        if transposed:
            chosen = [(col, row) for row, col in chosen]
        return sorted(chosen)

    best = min((pairs(p) for p in cand))
    n_rows, n_cols = (m, n) if transposed else (n, m)
    return Assignment.from_matches(best, n_rows, n_cols)
