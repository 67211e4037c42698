"""CLEAR-MOT, IDF1, AP and TPR@FAR."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .association import INFEASIBLE, solve_assignment
from .errors import DomainError
from .geometry import iou_matrix
from .sequence import SequenceResult

MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2

# headline column order of the report, as MOT leaderboards print it
REPORT_COLUMNS = ("MOTA", "IDF1", "MT", "ML", "IDs", "FP", "FN", "GT")


@dataclass
class MotReport:
    MOTA: float
    IDF1: float
    MT: int
    ML: int
    IDs: int
    FP: int
    FN: int
    GT: int
    matches: int = 0
    frag: int = 0
    n_trajectories: int = 0

    def as_row(self) -> list[str]:
        vals = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            vals.append(f"{v:.3f}" if isinstance(v, float) else str(v))
        return vals

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pair_iou(gt_boxes, hyp_boxes) -> np.ndarray:
    return iou_matrix(gt_boxes, hyp_boxes)


def _clear_events(gt: SequenceResult, hyp: SequenceResult, iou_threshold: float):
    gt_frames = gt.by_frame()
    hyp_frames = hyp.by_frame()
    frames = sorted(set(gt_frames) | set(hyp_frames))
    empty = (np.zeros(0, dtype=int), np.zeros((0, 4)))

    last_match: dict[int, int] = {}  # gt id -> hyp id of its most recent match
    fp = fn = ids = n_match = 0
    per_gt_total: dict[int, int] = {}
    per_gt_tracked: dict[int, int] = {}
    per_gt_status: dict[int, list[bool]] = {}

    for f in frames:
        g_ids, g_boxes = gt_frames.get(f, empty)
        h_ids, h_boxes = hyp_frames.get(f, empty)
        overlap = _pair_iou(g_boxes, h_boxes)
        g_index = {int(g): k for k, g in enumerate(g_ids)}
        h_index = {int(h): k for k, h in enumerate(h_ids)}
        matched: dict[int, int] = {}

        # keep earlier correspondences that are still valid
        taken_h = set()
        for g, h in sorted(last_match.items()):
            if (
                g in g_index
                and h in h_index
                and h not in taken_h
                and overlap[g_index[g], h_index[h]] >= iou_threshold
            ):
                matched[g] = h
                taken_h.add(h)
        free_g = [k for k, g in enumerate(g_ids) if int(g) not in matched]
        free_h = [k for k, h in enumerate(h_ids) if int(h) not in taken_h]
        if free_g and free_h:
            sub = overlap[np.ix_(free_g, free_h)]
            cost = np.where(sub >= iou_threshold, np.clip(1.0 - sub, 0.0, None), INFEASIBLE)
            for r, c in solve_assignment(cost).matches:
                g, h = int(g_ids[free_g[r]]), int(h_ids[free_h[c]])
                if g in last_match and last_match[g] != h:
                    ids += 1
                matched[g] = h

        for g in matched:
            last_match[g] = matched[g]
        n_match += len(matched)
        fn += len(g_ids) - len(matched)
        fp += len(h_ids) - len(matched)
        for g in g_ids:
            g = int(g)
            per_gt_total[g] = per_gt_total.get(g, 0) + 1
            hit = g in matched
            per_gt_tracked[g] = per_gt_tracked.get(g, 0) + hit
            per_gt_status.setdefault(g, []).append(hit)

    return fp, fn, ids, n_match, per_gt_total, per_gt_tracked, per_gt_status


def evaluate_idf1(gt: SequenceResult, hyp: SequenceResult, iou_threshold: float = 0.5) -> float:
    return _idf1_counts(gt, hyp, iou_threshold)[0]


def _idf1_counts(gt: SequenceResult, hyp: SequenceResult, iou_threshold: float):
    """Return (IDF1, IDTP, IDFP, IDFN) under the best one-to-one id mapping."""
    g_list, h_list = gt.ids(), hyp.ids()
    n_gt, n_hyp = len(gt), len(hyp)
    if n_gt + n_hyp == 0:
        return 1.0, 0, 0, 0
    if not g_list or not h_list:
        return 0.0, 0, n_hyp, n_gt
    g_pos = {g: k for k, g in enumerate(g_list)}
    h_pos = {h: k for k, h in enumerate(h_list)}
    overlap_count = np.zeros((len(g_list), len(h_list)))
    hyp_frames = hyp.by_frame()
    for f, (g_ids, g_boxes) in gt.by_frame().items():
        if f not in hyp_frames:
            continue
        h_ids, h_boxes = hyp_frames[f]
        ok = _pair_iou(g_boxes, h_boxes) >= iou_threshold
        gi, hi = np.nonzero(ok)
        for a, b in zip(gi, hi):
            overlap_count[g_pos[int(g_ids[a])], h_pos[int(h_ids[b])]] += 1
    # maximise the summed overlap: all pairs feasible, cost = max - count
    cost = overlap_count.max() - overlap_count
    idtp = int(sum(overlap_count[r, c] for r, c in solve_assignment(cost).matches))
    idfp, idfn = n_hyp - idtp, n_gt - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn), idtp, idfp, idfn


def evaluate_clear(gt: SequenceResult, hyp: SequenceResult, iou_threshold: float = 0.5) -> MotReport:
    fp, fn, ids, n_match, total, tracked, status = _clear_events(gt, hyp, iou_threshold)
    n_gt = len(gt)
    mota = 1.0 - (fn + fp + ids) / n_gt if n_gt else (1.0 if fp == 0 else -float(fp))
    ratios = {g: tracked[g] / total[g] for g in total}
    mt = sum(r >= MOSTLY_TRACKED for r in ratios.values())
    ml = sum(r < MOSTLY_LOST for r in ratios.values())
    frag = 0
    for hits in status.values():
        # a fragmentation is a tracked -> untracked -> tracked interruption
        seen = False
        for prev, cur in zip(hits, hits[1:]):
            seen = seen or prev
            if seen and not prev and cur:
                frag += 1
    return MotReport(
        MOTA=mota,
        IDF1=evaluate_idf1(gt, hyp, iou_threshold),
        MT=mt,
        ML=ml,
        IDs=ids,
        FP=fp,
        FN=fn,
        GT=n_gt,
        matches=n_match,
        frag=frag,
        n_trajectories=len(total),
    )


def tpr_at_far(genuine_scores, impostor_scores, far: float = 0.1) -> float:
    """True-positive rate at a false-accept rate.

    For a retrieval set, pass every same-identity pair score as genuine and
    every cross-identity pair score as impostor.

    The threshold is the lowest impostor score ``t`` with
    ``mean(impostor >= t) <= far``; if no impostor score qualifies, it is the
    highest impostor score. Genuine scores strictly above it count as hits.
    """
    gen = np.asarray(genuine_scores, dtype=float).ravel()
    imp = np.sort(np.asarray(impostor_scores, dtype=float).ravel())
    if gen.size == 0 or imp.size == 0:
        raise DomainError("genuine and impostor score lists must be non-empty")
    if not 0.0 < far < 1.0:
        raise DomainError("far must lie in (0, 1)")
    n = imp.size
    # fraction of impostors >= imp[k] for each sorted position (ties -> first occurrence)
    first = np.searchsorted(imp, imp, side="left")
    accept = (n - first) / n
    ok = accept <= far
    threshold = imp[ok].min() if ok.any() else imp[-1]
    return float(np.mean(gen > threshold))


def average_precision(scored_boxes, gts, iou_threshold: float = 0.5) -> float:
    """All-point interpolated AP with greedy, score-descending matching."""
    gts = list(gts)
    dets = sorted(enumerate(scored_boxes), key=lambda kv: (-kv[1][1], kv[0]))
    if not gts:
        return 0.0
    if not dets:
        return 0.0
    boxes = [b for _, (b, _) in dets]
    overlap = iou_matrix(boxes, gts)
    used = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(dets))
    for k in range(len(dets)):
        cand = np.where(~used & (overlap[k] >= iou_threshold), overlap[k], -1.0)
        j = int(cand.argmax())
        if cand[j] >= 0:
            used[j] = True
            tp[k] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / len(gts)
    precision = ctp / np.arange(1, len(dets) + 1)
    mrec = np.r_[0.0, recall, 1.0]
    mpre = np.r_[1.0, precision, 0.0]
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
