"""Detection and tracking evaluation: VOC AP, CLEAR-MOT, IDF1 and DetA.

Sequences are mappings ``frame -> detections``; detections may be
:class:`DetectionBatch` objects or lists of :class:`ScoredDetection`.
Ground truth uses ``confidence`` only as a placeholder and ``track_id`` as
the object identity.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .assignment import gated_optimal_match, optimal_assign
from .geometry import DetectionBatch, as_batch, iou_matrix


class MetricInputError(ValueError):
    """Evaluation input violates a precondition (e.g. duplicate ids in a frame)."""


class UndefinedMetricError(MetricInputError):
    """The metric has no value for this input, e.g. AP without ground truth."""


@dataclass
class ApResult:
    ap: dict[int, float]
    map: float
    precision_recall_curve: dict[int, list[tuple[float, float]]] = field(default_factory=dict)


def _frames(seq: Mapping) -> dict[int, DetectionBatch]:
    return {f: as_batch(d) for f, d in seq.items()}


def _ranked_matches(pred, gt, cls, iou_thr):
    """Confidence-ranked TP flags for ``cls`` plus the ground-truth count."""
    entries = []
    for f in sorted(pred):
        p = pred[f]
        for k in np.nonzero(p.class_id == cls)[0]:
            entries.append((-p.confidence[k], f, int(k)))
    entries.sort()
    n_gt = 0
    gt_boxes = {}
    for f, g in gt.items():
        sel = np.nonzero(g.class_id == cls)[0]
        gt_boxes[f] = g.boxes[sel]
        n_gt += len(sel)
    used = {f: np.zeros(len(b), dtype=bool) for f, b in gt_boxes.items()}
    overlap_cache = {}
    tp = np.zeros(len(entries), dtype=bool)
    conf = np.zeros(len(entries))
    for r, (neg_conf, f, k) in enumerate(entries):
        conf[r] = -neg_conf
        boxes = gt_boxes.get(f)
        if boxes is None or len(boxes) == 0:
            continue
        if f not in overlap_cache:
            p = pred[f]
            overlap_cache[f] = iou_matrix(p.boxes, boxes)
        row = np.where(used[f], -1.0, overlap_cache[f][k])
        best = int(row.argmax())
        if row[best] >= iou_thr:
            used[f][best] = True
            tp[r] = True
    return tp, conf, n_gt


def average_precision(recall: np.ndarray, precision: np.ndarray, eleven_point: bool = False) -> float:
    """Area under the precision envelope of a ranked PR curve."""
    if eleven_point:
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            above = precision[recall >= t]
            ap += (above.max() if above.size else 0.0) / 11.0
        return float(ap)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def voc_map(predictions: Mapping, ground_truth: Mapping, iou_thr: float = 0.5, eleven_point: bool = False) -> ApResult:
    """Pascal VOC style mean AP over the classes present in the ground truth.

    Detections are ranked globally by confidence; each one matches the
    highest-IoU still unmatched ground-truth box of its frame if that IoU
    reaches ``iou_thr``.
    """
    pred = _frames(predictions)
    gt = _frames(ground_truth)
    classes = sorted({int(c) for g in gt.values() for c in g.class_id})
    if not classes:
        raise UndefinedMetricError("average precision is undefined without ground truth")
    aps, curves = {}, {}
    for cls in classes:
        tp, _, n_gt = _ranked_matches(pred, gt, cls, iou_thr)
        ctp = np.cumsum(tp)
        cfp = np.cumsum(~tp)
        recall = ctp / n_gt
        precision = ctp / np.maximum(ctp + cfp, 1)
        aps[cls] = average_precision(recall, precision, eleven_point)
        curves[cls] = [(float(r), float(p)) for r, p in zip(recall, precision)]
    return ApResult(aps, float(np.mean(list(aps.values()))), curves)


@dataclass
class MotReport:
    mota: float
    motp: float
    idf1: float
    mt: int
    ml: int
    fp: int
    fn: int
    ids: int
    deta: float
    tp: int = 0
    gt_count: int = 0
    gt_tracks: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _check_unique(seq: dict[int, DetectionBatch], side: str) -> None:
    for f, d in seq.items():
        ids = d.track_id
        if len(ids) != len(np.unique(ids)):
            raise MetricInputError(f"duplicate {side} ids in frame {f}")
        if (ids < 0).any():
            raise MetricInputError(f"{side} detections in frame {f} lack identities")


def _prepare(tracked, ground_truth):
    hyp = _frames(tracked)
    gt = _frames(ground_truth)
    _check_unique(hyp, "hypothesis")
    _check_unique(gt, "ground-truth")
    return hyp, gt


def clear_mot_matches(tracked: Mapping, ground_truth: Mapping, iou_thr: float = 0.5):
    """Per-frame CLEAR-MOT correspondences.

    Yields ``(frame, matches, n_gt, n_hyp, switches)`` where ``matches`` is a
    list of ``(gt_id, hyp_id, iou)``.
    """
    hyp, gt = _prepare(tracked, ground_truth)
    previous: dict[int, int] = {}
    last_match: dict[int, int] = {}
    for f in sorted(set(hyp) | set(gt)):
        g = gt.get(f, DetectionBatch.empty())
        h = hyp.get(f, DetectionBatch.empty())
        overlap = iou_matrix(g.boxes, h.boxes)
        gidx = {int(t): i for i, t in enumerate(g.track_id)}
        hidx = {int(t): j for j, t in enumerate(h.track_id)}
        matches = []
        used_g, used_h = set(), set()
        for gid, hid in previous.items():
            i, j = gidx.get(gid), hidx.get(hid)
            if i is not None and j is not None and overlap[i, j] >= iou_thr:
                matches.append((gid, hid, float(overlap[i, j])))
                used_g.add(i)
                used_h.add(j)
        free_g = [i for i in range(len(g)) if i not in used_g]
        free_h = [j for j in range(len(h)) if j not in used_h]
        if free_g and free_h:
            sub = overlap[np.ix_(free_g, free_h)]
            for a, b in gated_optimal_match(sub, iou_thr):
                i, j = free_g[a], free_h[b]
                matches.append((int(g.track_id[i]), int(h.track_id[j]), float(overlap[i, j])))
        switches = 0
        for gid, hid, _ in matches:
            if gid in last_match and last_match[gid] != hid:
                switches += 1
            last_match[gid] = hid
        previous = {gid: hid for gid, hid, _ in matches}
        yield f, matches, len(g), len(h), switches


def _motp(iou_sum: float, tp: int, distance: bool) -> float:
    if not tp:
        return 0.0
    mean = iou_sum / tp
    return 1.0 - mean if distance else mean


def clear_mot(tracked: Mapping, ground_truth: Mapping, iou_thr: float = 0.5, motp_distance: bool = False) -> MotReport:
    """CLEAR-MOT counters; ``idf1`` and ``deta`` are filled in as well.

    MOTP is the mean IoU of matched pairs (higher is better). With
    ``motp_distance`` it is the mean of ``1 - IoU`` instead (lower is better).
    """
    tp = fp = fn = ids = 0
    iou_sum = 0.0
    gt_count = 0
    lifespan: dict[int, int] = defaultdict(int)
    covered: dict[int, int] = defaultdict(int)
    for _, matches, n_gt, n_hyp, switches in clear_mot_matches(tracked, ground_truth, iou_thr):
        tp += len(matches)
        fn += n_gt - len(matches)
        fp += n_hyp - len(matches)
        ids += switches
        gt_count += n_gt
        iou_sum += sum(m[2] for m in matches)
        for gid, _, _ in matches:
            covered[gid] += 1
    for f, g in _frames(ground_truth).items():
        for gid in g.track_id:
            lifespan[int(gid)] += 1
    if gt_count == 0:
        raise UndefinedMetricError("MOTA is undefined without ground truth")
    ratio = {gid: covered[gid] / n for gid, n in lifespan.items()}
    return MotReport(
        mota=1.0 - (fn + fp + ids) / gt_count,
        motp=_motp(iou_sum, tp, motp_distance),
        idf1=idf1(tracked, ground_truth, iou_thr),
        mt=sum(r >= 0.8 for r in ratio.values()),
        ml=sum(r <= 0.2 for r in ratio.values()),
        fp=fp,
        fn=fn,
        ids=ids,
        deta=det_a(tracked, ground_truth, iou_thr),
        tp=tp,
        gt_count=gt_count,
        gt_tracks=len(lifespan),
    )


def identity_overlap(tracked: Mapping, ground_truth: Mapping, iou_thr: float = 0.5):
    """Frame-overlap counts between every gt and hypothesis trajectory.

    Returns ``(gt_ids, hyp_ids, counts, gt_lengths, hyp_lengths)``.
    """
    hyp, gt = _prepare(tracked, ground_truth)
    gids = sorted({int(t) for g in gt.values() for t in g.track_id})
    hids = sorted({int(t) for h in hyp.values() for t in h.track_id})
    gpos = {t: i for i, t in enumerate(gids)}
    hpos = {t: j for j, t in enumerate(hids)}
    counts = np.zeros((len(gids), len(hids)), dtype=int)
    glen = np.zeros(len(gids), dtype=int)
    hlen = np.zeros(len(hids), dtype=int)
    for f, g in gt.items():
        for t in g.track_id:
            glen[gpos[int(t)]] += 1
    for f, h in hyp.items():
        for t in h.track_id:
            hlen[hpos[int(t)]] += 1
        g = gt.get(f)
        if g is None or len(g) == 0 or len(h) == 0:
            continue
        hit = iou_matrix(g.boxes, h.boxes) >= iou_thr
        for i, j in zip(*np.nonzero(hit)):
            counts[gpos[int(g.track_id[i])], hpos[int(h.track_id[j])]] += 1
    return gids, hids, counts, glen, hlen


def idf1(tracked: Mapping, ground_truth: Mapping, iou_thr: float = 0.5) -> float:
    """Identity F1 under the globally optimal trajectory-to-trajectory matching.

    Pairing gt trajectory g with hypothesis h costs the frames in which they
    are not matched to each other; minimising that is the same as maximising
    the co-matched frame count IDTP.
    """
    _, _, counts, glen, hlen = identity_overlap(tracked, ground_truth, iou_thr)
    total = int(glen.sum() + hlen.sum())
    if total == 0:
        return 1.0
    idtp = 0
    if counts.size:
        pairs, _ = optimal_assign(-counts)
        idtp = int(sum(counts[i, j] for i, j in pairs))
    idfn = int(glen.sum()) - idtp
    idfp = int(hlen.sum()) - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn)


def det_a(tracked: Mapping, ground_truth: Mapping, alpha: float = 0.5, multi_threshold: bool = False) -> float:
    """Detection accuracy TP / (TP + FN + FP) under per-frame optimal matching.

    ``multi_threshold`` averages over alpha = 0.05, 0.10, ..., 0.95.
    """
    if multi_threshold:
        alphas = np.arange(0.05, 0.951, 0.05)
        return float(np.mean([det_a(tracked, ground_truth, float(a)) for a in alphas]))
    hyp = _frames(tracked)
    gt = _frames(ground_truth)
    tp = fp = fn = 0
    for f in set(hyp) | set(gt):
        g = gt.get(f, DetectionBatch.empty())
        h = hyp.get(f, DetectionBatch.empty())
        m = len(gated_optimal_match(iou_matrix(g.boxes, h.boxes), alpha)) if len(g) and len(h) else 0
        tp += m
        fn += len(g) - m
        fp += len(h) - m
    denom = tp + fn + fp
    return tp / denom if denom else 1.0
