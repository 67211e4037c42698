"""Online tracklet pool with a single fused-cost association per frame."""

from __future__ import annotations

import enum
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .association import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_COST,
    appearance_cost,
    fuse_costs,
    motion_cost,
    solve_assignment,
)
from .errors import DomainError, UsageError
from .geometry import Box
from .kalman import CHI2_GATE_4DOF, KalmanFilter
from .sequence import SequenceResult


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


_ALLOWED = {
    TrackStatus.TENTATIVE: {TrackStatus.ACTIVE, TrackStatus.REMOVED},
    TrackStatus.ACTIVE: {TrackStatus.LOST},
    TrackStatus.LOST: {TrackStatus.ACTIVE, TrackStatus.REMOVED},
    TrackStatus.REMOVED: set(),
}


@dataclass(eq=False)
class Detection:
    box: Box
    confidence: float = 1.0
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence {self.confidence} outside [0, 1]")
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=float).ravel()
            norm = np.linalg.norm(emb)
            if not norm > 0:
                raise DomainError("zero-norm embedding")
            self.embedding = emb / norm


@dataclass
class TrackerConfig:
    lam: float = DEFAULT_LAMBDA
    alpha_ema: float = 0.9
    confirm_frames: int = 2
    max_lost_frames: int = 30
    gate: float = CHI2_GATE_4DOF
    max_cost: float = DEFAULT_MAX_COST
    min_confidence: float = 0.5
    motion_only: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError("lambda must lie in [0, 1]")
        if not 0.0 <= self.alpha_ema <= 1.0:
            raise DomainError("alpha_ema must lie in [0, 1]")
        if self.confirm_frames < 1:
            raise DomainError("confirm_frames must be >= 1")
        if self.max_lost_frames < 0:
            raise DomainError("max_lost_frames must be >= 0")
        if not self.gate > 0:
            raise DomainError("gate must be positive")
        if self.motion_only:
            self.lam = 0.0

    @property
    def uses_appearance(self) -> bool:
        return not self.motion_only and self.lam > 0.0


def ema_update(e_prev: np.ndarray, f: np.ndarray, alpha: float) -> tuple[np.ndarray, bool]:
    """Momentum update of a tracklet's appearance, renormalised to unit length.

    Returns ``(vector, ok)``; on exact cancellation ``e_prev`` is kept and
    ``ok`` is False.
    """
    e = alpha * np.asarray(e_prev, dtype=float) + (1.0 - alpha) * np.asarray(f, dtype=float)
    norm = np.linalg.norm(e)
    if norm == 0.0:
        return np.asarray(e_prev, dtype=float), False
    return e / norm, True


class Tracklet:
    def __init__(self, track_id: int, mean, covariance, appearance, frame: int, box: Box):
        self.id = track_id
        self.mean = mean
        self.covariance = covariance
        self.appearance = appearance
        self.status = TrackStatus.TENTATIVE
        self.frames_since_update = 0
        self.consecutive_hits = 1
        self.start_frame = frame
        self.history: list[tuple[int, Box]] = [(frame, box)]

    def set_status(self, new: TrackStatus):
        if new is self.status:
            return
        if new not in _ALLOWED[self.status]:
            raise UsageError(f"illegal transition {self.status.value} -> {new.value}")
        self.status = new

    @property
    def box(self) -> Box:
        x, y, a, h = self.mean[:4]
        return Box.from_xyah(x, y, a, h)

    def __repr__(self):
        return f"Tracklet(id={self.id}, status={self.status.value}, hits={self.consecutive_hits})"


STAGES = ("predict", "cost", "assign", "update")


class Tracker:
    """Single-sequence tracker state machine. Not thread-safe."""

    def __init__(self, config: TrackerConfig | None = None, kalman: KalmanFilter | None = None):
        self.config = config or TrackerConfig()
        self.kf = kalman or KalmanFilter()
        self.pool: list[Tracklet] = []
        self.removed: list[Tracklet] = []
        self.next_id = 1
        self.last_frame: int | None = None
        self.timings: dict[str, float] = defaultdict(float)
        self.ema_failures = 0

    def _new_tracklet(self, det: Detection, frame: int) -> Tracklet:
        mean, cov = self.kf.initiate(det.box.to_xyah())
        appearance = det.embedding if self.config.uses_appearance else None
        trk = Tracklet(self.next_id, mean, cov, appearance, frame, det.box)
        self.next_id += 1
        if self.config.confirm_frames <= 1:
            trk.set_status(TrackStatus.ACTIVE)
        return trk

    def _cost_matrix(self, dets: Sequence[Detection]) -> np.ndarray:
        cfg = self.config
        means = np.stack([t.mean for t in self.pool])
        covs = np.stack([t.covariance for t in self.pool])
        meas = np.stack([d.box.to_xyah() for d in dets])
        a_m = motion_cost(self.kf.gating_distance_batch(means, covs, meas), cfg.gate)
        if not cfg.uses_appearance:
            return a_m
        if any(d.embedding is None for d in dets):
            raise DomainError("appearance cost enabled but a detection has no embedding")
        a_e = appearance_cost(
            np.stack([t.appearance for t in self.pool]), np.stack([d.embedding for d in dets])
        )
        return fuse_costs(a_e, a_m, cfg.lam)

    def step(self, frame_index: int, detections: Iterable[Detection]) -> list[tuple[int, Box]]:
        """Advance one frame; returns (id, box) of every Active tracklet."""
        if self.last_frame is not None and frame_index <= self.last_frame:
            raise UsageError(
                f"frame index must increase: got {frame_index} after {self.last_frame}"
            )
        self.last_frame = frame_index
        cfg = self.config
        dets = [d for d in detections if d.confidence >= cfg.min_confidence]
        clock = time.perf_counter

        t0 = clock()
        if self.pool:
            means, covs = self.kf.predict_batch(
                np.stack([t.mean for t in self.pool]), np.stack([t.covariance for t in self.pool])
            )
            for t, m, c in zip(self.pool, means, covs):
                t.mean, t.covariance = m, c
        t1 = clock()

        if self.pool and dets:
            cost = self._cost_matrix(dets)
            t2 = clock()
            result = solve_assignment(cost, cfg.max_cost)
            matches, lost_rows, new_cols = (
                result.matches, result.unmatched_rows, result.unmatched_cols
            )
        else:
            t2 = clock()
            matches, lost_rows, new_cols = [], list(range(len(self.pool))), list(range(len(dets)))
        t3 = clock()

        if matches:
            rows = [r for r, _ in matches]
            meas = np.stack([dets[c].box.to_xyah() for _, c in matches])
            means, covs = self.kf.update_batch(
                np.stack([self.pool[r].mean for r in rows]),
                np.stack([self.pool[r].covariance for r in rows]),
                meas,
            )
            for (r, c), m, cv in zip(matches, means, covs):
                trk = self.pool[r]
                trk.mean, trk.covariance = m, cv
                if cfg.uses_appearance:
                    trk.appearance, ok = ema_update(trk.appearance, dets[c].embedding, cfg.alpha_ema)
                    self.ema_failures += not ok
                trk.frames_since_update = 0
                trk.consecutive_hits += 1
                if trk.status is TrackStatus.TENTATIVE:
                    if trk.consecutive_hits >= cfg.confirm_frames:
                        trk.set_status(TrackStatus.ACTIVE)
                else:
                    trk.set_status(TrackStatus.ACTIVE)
                trk.history.append((frame_index, trk.box))

        for r in lost_rows:
            trk = self.pool[r]
            trk.frames_since_update += 1
            trk.consecutive_hits = 0
            if trk.status is TrackStatus.TENTATIVE:
                trk.set_status(TrackStatus.REMOVED)
            elif trk.status is TrackStatus.ACTIVE:
                trk.set_status(TrackStatus.LOST)
            if trk.status is TrackStatus.LOST and trk.frames_since_update > cfg.max_lost_frames:
                trk.set_status(TrackStatus.REMOVED)

        kept = []
        for trk in self.pool:
            (self.removed if trk.status is TrackStatus.REMOVED else kept).append(trk)
        self.pool = kept
        for c in new_cols:
            self.pool.append(self._new_tracklet(dets[c], frame_index))
        t4 = clock()

        self.timings["predict"] += t1 - t0
        self.timings["cost"] += t2 - t1
        self.timings["assign"] += t3 - t2
        self.timings["update"] += t4 - t3
        return [(t.id, t.box) for t in self.pool if t.status is TrackStatus.ACTIVE]

    def tracklets(self) -> list[Tracklet]:
        """Every tracklet seen so far, live and removed, ordered by id."""
        return sorted(self.pool + self.removed, key=lambda t: t.id)


def tracker_run(
    config: TrackerConfig,
    frames: Sequence[Sequence[Detection]],
    frame_indices: Sequence[int] | None = None,
    backfill: bool = True,
) -> SequenceResult:
    """Track a whole sequence and collect the Active output rows.

    With ``backfill`` the frames a tracklet spent as Tentative are written
    out once it is confirmed, so the confirmation delay does not show up
    as missed boxes. Frames a tracklet spent Lost are never filled in.
    """
    tracker = Tracker(config)
    if frame_indices is None:
        frame_indices = range(1, len(frames) + 1)
    rows: list[tuple[int, int, Box]] = []
    emitted: set[int] = set()
    for frame, dets in zip(frame_indices, frames):
        out = tracker.step(frame, dets)
        for tid, box in out:
            if backfill and tid not in emitted:
                trk = next(t for t in tracker.pool if t.id == tid)
                rows.extend((f, tid, b) for f, b in trk.history[:-1])
            emitted.add(tid)
            rows.append((frame, tid, box))
    return SequenceResult(rows)
