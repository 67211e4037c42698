"""Box arithmetic, anchor templates, IOU-threshold anchor labelling and
regression-target encoding.

Boxes are stored as (left, top, width, height), the MOT-file convention.
Centre form (cx, cy, w, h) is used for regression targets and the motion
model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError

FOREGROUND_IOU = 0.5
BACKGROUND_IOU = 0.4

ANCHOR_ASPECT = 3.0  # height / width
NUM_TEMPLATES = 12
NUM_LEVELS = 3
TEMPLATES_PER_LEVEL = NUM_TEMPLATES // NUM_LEVELS
# down-sampling stride of each pyramid level, finest first
LEVEL_STRIDES = (8, 16, 32)


@dataclass(frozen=True, slots=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DomainError(f"box needs positive width and height, got w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise DomainError("box coordinates must be finite")

    @classmethod
    def from_center(cls, cx, cy, w, h) -> "Box":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @classmethod
    def from_xyah(cls, x, y, aspect, h) -> "Box":
        """Build from center, aspect ratio (w/h) and height."""
        return cls.from_center(x, y, aspect * h, h)

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_center(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    def to_xyah(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w / self.h, self.h])

    def to_tlwh(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h])

    def to_tlbr(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)


def iou(a: Box, b: Box) -> float:
    ax2, ay2 = a.x + a.w, a.y + a.h
    bx2, by2 = b.x + b.w, b.y + b.h
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # rounding in the corner arithmetic can push identical boxes just above 1
    return min(1.0, inter / (a.area + b.area - inter))


def as_tlwh_array(boxes) -> np.ndarray:
    """Stack boxes (Box objects or 4-sequences) into an (N, 4) float array."""
    if isinstance(boxes, np.ndarray):
        arr = boxes.astype(float, copy=False).reshape(-1, 4)
    else:
        arr = np.array(
            [b.to_tlwh() if isinstance(b, Box) else b for b in boxes], dtype=float
        ).reshape(-1, 4)
    if np.any(arr[:, 2:] <= 0):
        raise DomainError("box needs positive width and height")
    return arr


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IOU between two box collections, shape (len(a), len(b))."""
    a = as_tlwh_array(a)
    b = as_tlwh_array(b)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


class AnchorTemplate(NamedTuple):
    width: float
    height: float
    scale_index: int
    template_index: int

    @property
    def stride(self) -> int:
        return LEVEL_STRIDES[self.scale_index]


def make_anchor_templates() -> list[AnchorTemplate]:
    """The 12 pedestrian anchor shapes, widths 8 * 2**(k/2) for k = 1..12.

    Templates are handed out four per pyramid level in increasing width, so
    the smallest four sit on the stride-8 level.
    """
    templates = []
    for t in range(NUM_TEMPLATES):
        width = 8.0 * 2.0 ** ((t + 1) / 2.0)
        templates.append(
            AnchorTemplate(width, ANCHOR_ASPECT * width, t // TEMPLATES_PER_LEVEL, t)
        )
    return templates


def tile_anchors(template: AnchorTemplate, grid_w: int, grid_h: int) -> list[Box]:
    """Place ``template`` at every cell centre of a (grid_w x grid_h) feature map."""
    s = template.stride
    return [
        Box.from_center((i + 0.5) * s, (j + 0.5) * s, template.width, template.height)
        for j in range(grid_h)
        for i in range(grid_w)
    ]


class AnchorKind(enum.Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"
    IGNORE = "ignore"


class AnchorLabel(NamedTuple):
    kind: AnchorKind
    gt_index: int | None = None
    best_iou: float = 0.0


def label_for_iou(best: float, gt_index: int | None) -> AnchorLabel:
    if best > FOREGROUND_IOU:
        return AnchorLabel(AnchorKind.FOREGROUND, gt_index, best)
    if best < BACKGROUND_IOU:
        return AnchorLabel(AnchorKind.BACKGROUND, None, best)
    return AnchorLabel(AnchorKind.IGNORE, None, best)


def assign_anchors(anchors: Sequence[Box], gts: Sequence[Box]) -> list[AnchorLabel]:
    """Dual-threshold labelling of anchors by their best IOU over ``gts``.

    IOU > 0.5 is foreground, IOU < 0.4 background, the band in between is
    ignored. No forced matching: a ground truth may end up with no anchor.
    """
    if len(anchors) == 0:
        return []
    if len(gts) == 0:
        return [AnchorLabel(AnchorKind.BACKGROUND) for _ in anchors]
    overlaps = iou_matrix(anchors, gts)
    best_idx = overlaps.argmax(axis=1)  # first maximum -> lowest gt index on ties
    best = overlaps[np.arange(len(anchors)), best_idx]
    return [label_for_iou(float(v), int(k)) for v, k in zip(best, best_idx)]


class RegressionTarget(NamedTuple):
    tx: float
    ty: float
    tw: float
    th: float


def encode_box(gt: Box, anchor: Box) -> RegressionTarget:
    return RegressionTarget(
        (gt.cx - anchor.cx) / anchor.w,
        (gt.cy - anchor.cy) / anchor.h,
        math.log(gt.w / anchor.w),
        math.log(gt.h / anchor.h),
    )


def decode_box(t: RegressionTarget, anchor: Box) -> Box:
    tx, ty, tw, th = t
    return Box.from_center(
        tx * anchor.w + anchor.cx,
        ty * anchor.h + anchor.cy,
        anchor.w * math.exp(tw),
        anchor.h * math.exp(th),
    )


def encode_boxes(gts: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Vectorised :func:`encode_box` over matching rows of two (N, 4) tlwh arrays."""
    gts = as_tlwh_array(gts)
    anchors = as_tlwh_array(anchors)
    gc = gts[:, :2] + gts[:, 2:] / 2.0
    ac = anchors[:, :2] + anchors[:, 2:] / 2.0
    return np.hstack([(gc - ac) / anchors[:, 2:], np.log(gts[:, 2:] / anchors[:, 2:])])


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    anchors = as_tlwh_array(anchors)
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 4)
    ac = anchors[:, :2] + anchors[:, 2:] / 2.0
    wh = anchors[:, 2:] * np.exp(deltas[:, 2:])
    c = deltas[:, :2] * anchors[:, 2:] + ac
    return np.hstack([c - wh / 2.0, wh])
