"""Axis-aligned box arithmetic, IoU and greedy non-maximum suppression.

Boxes are stored corner-form ``(left, top, width, height)``, the MOT CSV
layout. Batched routines work on ``(n, 4)`` float arrays in the same layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

PEDESTRIAN = 1


@dataclass(frozen=True, slots=True)
class Box:
    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width >= 0 and self.height >= 0):
            raise ValueError(f"box extent must be non-negative, got {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.width / 2.0, self.top + self.height / 2.0)

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "Box":
        return cls(cx - width / 2.0, cy - height / 2.0, width, height)

    def to_center(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        return (cx, cy, self.width, self.height)

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.top, self.width, self.height], dtype=float)

    @classmethod
    def from_array(cls, row: Sequence[float]) -> "Box":
        return cls(float(row[0]), float(row[1]), float(row[2]), float(row[3]))


@dataclass(frozen=True, slots=True)
class ScoredDetection:
    box: Box
    confidence: float
    class_id: int = PEDESTRIAN
    track_id: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


class DetectionBatch:
    """Column-oriented set of scored detections.

    Pipelines pass these around instead of lists of :class:`ScoredDetection`
    so that per-frame work stays vectorised. ``track_id`` uses -1 for "no
    identity".
    """

    __slots__ = ("boxes", "confidence", "class_id", "track_id")

    def __init__(self, boxes, confidence, class_id=None, track_id=None):
        self.boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        n = len(self.boxes)
        self.confidence = np.asarray(confidence, dtype=float).reshape(n)
        self.class_id = (
            np.full(n, PEDESTRIAN, dtype=int) if class_id is None else np.asarray(class_id, dtype=int).reshape(n)
        )
        self.track_id = np.full(n, -1, dtype=int) if track_id is None else np.asarray(track_id, dtype=int).reshape(n)

    @classmethod
    def empty(cls) -> "DetectionBatch":
        return cls(np.zeros((0, 4)), np.zeros(0))

    @classmethod
    def from_list(cls, detections: Iterable[ScoredDetection]) -> "DetectionBatch":
        dets = list(detections)
        if not dets:
            return cls.empty()
        return cls(
            [d.box.as_array() for d in dets],
            [d.confidence for d in dets],
            [d.class_id for d in dets],
            [-1 if d.track_id is None else d.track_id for d in dets],
        )

    def to_list(self) -> list[ScoredDetection]:
        return [self[i] for i in range(len(self))]

    def __len__(self) -> int:
        return len(self.boxes)

    def __getitem__(self, i: int) -> ScoredDetection:
        tid = int(self.track_id[i])
        return ScoredDetection(
            Box.from_array(self.boxes[i]),
            float(self.confidence[i]),
            int(self.class_id[i]),
            None if tid < 0 else tid,
        )

    def take(self, index) -> "DetectionBatch":
        index = np.asarray(index, dtype=int)
        return DetectionBatch(self.boxes[index], self.confidence[index], self.class_id[index], self.track_id[index])

    def with_track_ids(self, track_id) -> "DetectionBatch":
        return DetectionBatch(self.boxes, self.confidence, self.class_id, track_id)

    @staticmethod
    def concat(batches: Sequence["DetectionBatch"]) -> "DetectionBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            return DetectionBatch.empty()
        return DetectionBatch(
            np.concatenate([b.boxes for b in batches]),
            np.concatenate([b.confidence for b in batches]),
            np.concatenate([b.class_id for b in batches]),
            np.concatenate([b.track_id for b in batches]),
        )

    def rows(self) -> list[tuple]:
        """Hashable per-detection tuples, for exact set comparisons."""
        return [
            (*map(float, self.boxes[i]), float(self.confidence[i]), int(self.class_id[i]))
            for i in range(len(self))
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DetectionBatch):
            return NotImplemented
        return (
            np.array_equal(self.boxes, other.boxes)
            and np.array_equal(self.confidence, other.confidence)
            and np.array_equal(self.class_id, other.class_id)
            and np.array_equal(self.track_id, other.track_id)
        )

    def __repr__(self) -> str:
        return f"DetectionBatch(n={len(self)})"


def as_batch(detections) -> DetectionBatch:
    if isinstance(detections, DetectionBatch):
        return detections
    return DetectionBatch.from_list(detections)


def boxes_array(boxes) -> np.ndarray:
    """Coerce a sequence of :class:`Box`, nested rows or an array to ``(n, 4)``."""
    if isinstance(boxes, np.ndarray):
        return boxes.reshape(-1, 4).astype(float, copy=False)
    boxes = list(boxes)
    if not boxes:
        return np.zeros((0, 4))
    if isinstance(boxes[0], Box):
        return np.array([[b.left, b.top, b.width, b.height] for b in boxes], dtype=float)
    return np.asarray(boxes, dtype=float).reshape(-1, 4)


def to_center(boxes: np.ndarray) -> np.ndarray:
    out = np.array(boxes, dtype=float, copy=True)
    out[:, 0] += out[:, 2] / 2.0
    out[:, 1] += out[:, 3] / 2.0
    return out


def from_center(boxes: np.ndarray) -> np.ndarray:
    out = np.array(boxes, dtype=float, copy=True)
    out[:, 0] -= out[:, 2] / 2.0
    out[:, 1] -= out[:, 3] / 2.0
    return out


def iou(a: Box, b: Box) -> float:
    iw = min(a.left + a.width, b.left + b.width) - max(a.left, b.left)
    ih = min(a.top + a.height, b.top + b.height) - max(a.top, b.top)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.width * a.height + b.width * b.height - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU between two box arrays, shape ``(len(a), len(b))``."""
    a = boxes_array(a)
    b = boxes_array(b)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    bx1, by1 = b[:, 0], b[:, 1]
    # In-place steps keep temporaries down; the arithmetic is the plain
    # min/max intersection over the union of areas.
    inter = np.minimum(ax1 + a[:, 2:3], bx1 + b[:, 2])
    inter -= np.maximum(ax1, bx1)
    np.maximum(inter, 0.0, out=inter)
    ih = np.minimum(ay1 + a[:, 3:4], by1 + b[:, 3])
    ih -= np.maximum(ay1, by1)
    np.maximum(ih, 0.0, out=ih)
    inter *= ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :]
    union -= inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


_NMS_DENSE_LIMIT = 128
_NMS_BLOCK = 32


def nms_indices(boxes, scores, iou_threshold: float = 0.5) -> np.ndarray:
    """Indices kept by greedy NMS, in descending-score order.

    A box is dropped when its IoU with an already kept box exceeds
    ``iou_threshold``. Equal scores keep insertion order.
    """
    boxes = boxes_array(boxes)
    scores = np.asarray(scores, dtype=float)
    n = len(boxes)
    if n == 0:
        return np.zeros(0, dtype=int)
    order = np.argsort(-scores, kind="stable")
    if n > _NMS_DENSE_LIMIT:
        return _nms_blocked(boxes, order, iou_threshold)
    over = iou_matrix(boxes, boxes) > iou_threshold
    np.fill_diagonal(over, False)
    # Boxes that overlap nothing above the threshold are always kept; only
    # the conflicted ones need the sequential sweep.
    conflicted = over.any(axis=1)
    suppressed = np.zeros(n, dtype=bool)
    for i in order[conflicted[order]].tolist():
        if not suppressed[i]:
            suppressed |= over[i]
    return order[~suppressed[order]]


def _nms_blocked(boxes: np.ndarray, order: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Greedy NMS over blocks of the best live boxes.

    Each block is compared against every live box at once and resolved in
    rank order, so the cost scales with the number of kept boxes rather than
    with n squared when most candidates are near-duplicates.
    """
    keep = []
    live = order
    while live.size:
        k = min(_NMS_BLOCK, live.size)
        over = iou_matrix(boxes[live[:k]], boxes[live]) > iou_threshold
        dead = np.zeros(live.size, dtype=bool)
        for a in range(k):
            if not dead[a]:
                keep.append(live[a])
                dead |= over[a]
        live = live[k:][~dead[k:]]
    return np.array(keep, dtype=int)


def nms(candidates, iou_threshold: float = 0.5):
    """Greedy descending-confidence suppression.

    Accepts a list of :class:`ScoredDetection` (returns a list) or a
    :class:`DetectionBatch` (returns a batch).
    """
    if isinstance(candidates, DetectionBatch):
        return candidates.take(nms_indices(candidates.boxes, candidates.confidence, iou_threshold))
    candidates = list(candidates)
    if not candidates:
        return []
    keep = nms_indices(boxes_array([c.box for c in candidates]), [c.confidence for c in candidates], iou_threshold)
    return [candidates[i] for i in keep]


def clip(box: Box, frame_width: float, frame_height: float) -> Box:
    if frame_width <= 0 or frame_height <= 0:
        raise ValueError("frame dimensions must be positive")
    left = min(max(box.left, 0.0), frame_width)
    top = min(max(box.top, 0.0), frame_height)
    right = min(max(box.right, 0.0), frame_width)
    bottom = min(max(box.bottom, 0.0), frame_height)
    return Box(left, top, max(right - left, 0.0), max(bottom - top, 0.0))


def clip_array(boxes: np.ndarray, frame_width: float, frame_height: float) -> np.ndarray:
    boxes = boxes_array(boxes)
    x1 = np.clip(boxes[:, 0], 0.0, frame_width)
    y1 = np.clip(boxes[:, 1], 0.0, frame_height)
    x2 = np.clip(boxes[:, 0] + boxes[:, 2], 0.0, frame_width)
    y2 = np.clip(boxes[:, 1] + boxes[:, 3], 0.0, frame_height)
    return np.stack([x1, y1, np.maximum(x2 - x1, 0.0), np.maximum(y2 - y1, 0.0)], axis=1)


def covered_area(target, rects) -> float:
    """Exact area of ``target`` covered by the union of ``rects``.

    Coordinate compression over the clipped rectangle edges; every grid cell
    is either fully inside or fully outside each rectangle.
    """
    t = boxes_array([target] if isinstance(target, Box) else target)[0]
    r = boxes_array(rects)
    if len(r) == 0 or t[2] <= 0 or t[3] <= 0:
        return 0.0
    tx1, ty1, tx2, ty2 = t[0], t[1], t[0] + t[2], t[1] + t[3]
    x1 = np.clip(r[:, 0], tx1, tx2)
    y1 = np.clip(r[:, 1], ty1, ty2)
    x2 = np.clip(r[:, 0] + r[:, 2], tx1, tx2)
    y2 = np.clip(r[:, 1] + r[:, 3], ty1, ty2)
    live = (x2 > x1) & (y2 > y1)
    if not live.any():
        return 0.0
    x1, y1, x2, y2 = x1[live], y1[live], x2[live], y2[live]
    xs = np.unique(np.concatenate([x1, x2]))
    ys = np.unique(np.concatenate([y1, y2]))
    cx = (xs[:-1] + xs[1:]) / 2.0
    cy = (ys[:-1] + ys[1:]) / 2.0
    inside_x = (x1[:, None] <= cx[None, :]) & (cx[None, :] <= x2[:, None])
    inside_y = (y1[:, None] <= cy[None, :]) & (cy[None, :] <= y2[:, None])
    covered = (inside_x[:, :, None] & inside_y[:, None, :]).any(axis=0)
    cell = np.diff(xs)[:, None] * np.diff(ys)[None, :]
    return float((cell * covered).sum())
