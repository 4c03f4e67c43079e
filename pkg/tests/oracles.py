"""Independent reference implementations used by the tests.

Everything here is deliberately naive: integer arithmetic, pure-Python loops
or exhaustive enumeration. None of it imports the code under test except for
plain data containers.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def int_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU of integer-coordinate boxes from exact int64 intersection and union."""
    a = np.asarray(a, dtype=np.int64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.int64).reshape(-1, 4)
    l1, t1, r1, b1 = a[:, 0:1], a[:, 1:2], a[:, 0:1] + a[:, 2:3], a[:, 1:2] + a[:, 3:4]
    l2, t2, r2, b2 = b[:, 0], b[:, 1], b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.maximum(np.minimum(r1, r2) - np.maximum(l1, l2), 0)
    ih = np.maximum(np.minimum(b1, b2) - np.maximum(t1, t2), 0)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = np.zeros(inter.shape)
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def scalar_iou(a, b) -> float:
    l1, t1, w1, h1 = map(float, a)
    l2, t2, w2, h2 = map(float, b)
    iw = max(0.0, min(l1 + w1, l2 + w2) - max(l1, l2))
    ih = max(0.0, min(t1 + h1, t2 + h2) - max(t1, t2))
    inter = iw * ih
    union = w1 * h1 + w2 * h2 - inter
    return inter / union if union > 0 else 0.0


def nms_is_valid(keep, overlap: np.ndarray, scores: np.ndarray, thr: float) -> bool:
    """Check the defining property of greedy NMS.

    With boxes ranked by (-score, index), a box is kept iff no higher-ranked
    kept box overlaps it by more than ``thr``. That characterisation has a
    unique solution, so checking it checks the output exactly.
    """
    n = len(scores)
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(n), -scores))
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    keep = np.asarray(keep, dtype=int)
    if np.any(np.diff(rank[keep]) <= 0):
        return False
    kept = np.zeros(n, dtype=bool)
    kept[keep] = True
    earlier = rank[:, None] < rank[None, :]  # earlier[j, i]: j ranks before i
    blocked = (kept[:, None] & earlier & (overlap > thr)).any(axis=0)
    return bool(np.array_equal(kept, ~blocked))


def brute_min_assignment(cost: np.ndarray) -> float:
    cost = np.asarray(cost)
    n = cost.shape[0]
    perms = np.array(list(itertools.permutations(range(n))))
    return cost[np.arange(n), perms].sum(axis=1).min()


def ap_by_threshold_enumeration(preds, gts, iou_thr=0.5) -> float:
    """All-point AP from first principles for single-class toy data.

    ``preds``: list of (frame, box, conf) with distinct confidences.
    ``gts``: dict frame -> list of boxes. For every threshold theta the
    detections with conf >= theta are matched greedily (highest conf first,
    each to the best unmatched gt); AP integrates the precision envelope
    max{P(theta') : R(theta') >= r} over recall.
    """
    n_gt = sum(len(v) for v in gts.values())
    thresholds = sorted({p[2] for p in preds}, reverse=True)
    points = []
    for theta in thresholds:
        chosen = sorted((p for p in preds if p[2] >= theta), key=lambda p: -p[2])
        used = {f: [False] * len(v) for f, v in gts.items()}
        tp = 0
        for frame, box, _ in chosen:
            best, best_j = -1.0, None
            for j, g in enumerate(gts.get(frame, [])):
                if used[frame][j]:
                    continue
                q = scalar_iou(box, g)
                if q > best:
                    best, best_j = q, j
            if best_j is not None and best >= iou_thr:
                used[frame][best_j] = True
                tp += 1
        points.append((Fraction(tp, n_gt), Fraction(tp, len(chosen))))
    ap = Fraction(0)
    prev = Fraction(0)
    for r in sorted({p[0] for p in points}):
        if r == 0:
            continue
        envelope = max(p for rr, p in points if rr >= r)
        ap += (r - prev) * envelope
        prev = r
    return float(ap)


def idf1_brute(tracked: dict, gt: dict, iou_thr=0.5) -> float:
    """IDF1 by enumerating every one-to-one gt/hypothesis trajectory pairing."""
    gids = sorted({int(i) for b in gt.values() for i in b.track_id})
    hids = sorted({int(i) for b in tracked.values() for i in b.track_id})
    co = {(g, h): 0 for g in gids for h in hids}
    for f, hb in tracked.items():
        gb = gt.get(f)
        if gb is None:
            continue
        for i in range(len(gb)):
            for j in range(len(hb)):
                if scalar_iou(gb.boxes[i], hb.boxes[j]) >= iou_thr:
                    co[int(gb.track_id[i]), int(hb.track_id[j])] += 1
    n_gt = sum(len(b) for b in gt.values())
    n_hyp = sum(len(b) for b in tracked.values())
    best = 0
    k = max(len(gids), len(hids))
    g_pad = gids + [None] * (k - len(gids))
    h_pad = hids + [None] * (k - len(hids))
    for perm in itertools.permutations(range(k)):
        total = sum(
            co[g_pad[a], h_pad[b]] for a, b in enumerate(perm) if g_pad[a] is not None and h_pad[b] is not None
        )
        best = max(best, total)
    denom = n_gt + n_hyp
    return 2 * best / denom if denom else 1.0
