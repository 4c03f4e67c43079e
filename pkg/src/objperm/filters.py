"""Decoupled tracking baselines: a box particle filter and a Kalman filter.

The particle filter runs resample, measure and predict over box hypotheses
that carry a planar centre velocity. Particles live in column arrays inside
:class:`ParticleSet`; :class:`Particle` is the per-item view.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .assignment import greedy_from_matrix, greedy_iou_assign
from .config import KalmanConfig, ParticleConfig
from .geometry import Box, DetectionBatch, as_batch, iou_matrix, nms_indices, to_center


class CorruptMeasurementError(ValueError):
    """A measurement contained NaN or infinite values."""


@dataclass(frozen=True)
class Particle:
    box: Box
    velocity: tuple[float, float]
    score: float
    id: int
    age: int


class ParticleSet:
    """Fixed-capacity particle population.

    ``frame_size`` bounds the uniform background samples used when there is
    nothing to clone and nothing to spawn on.
    """

    __slots__ = ("boxes", "velocity", "score", "ids", "age", "capacity", "frame_size", "next_id")

    def __init__(
        self,
        capacity: int,
        frame_size: tuple[float, float] = (1920.0, 1080.0),
        boxes=None,
        velocity=None,
        score=None,
        ids=None,
        age=None,
        next_id: int = 0,
    ):
        self.capacity = int(capacity)
        self.frame_size = (float(frame_size[0]), float(frame_size[1]))
        self.boxes = np.zeros((0, 4)) if boxes is None else np.asarray(boxes, dtype=float).reshape(-1, 4)
        n = len(self.boxes)
        self.velocity = np.zeros((n, 2)) if velocity is None else np.asarray(velocity, dtype=float).reshape(n, 2)
        self.score = np.zeros(n) if score is None else np.asarray(score, dtype=float).reshape(n)
        self.ids = np.arange(next_id, next_id + n) if ids is None else np.asarray(ids, dtype=int).reshape(n)
        self.age = np.zeros(n, dtype=int) if age is None else np.asarray(age, dtype=int).reshape(n)
        self.next_id = max(int(next_id), int(self.ids.max()) + 1 if n else 0)
        if n > self.capacity:
            raise ValueError(f"{n} particles exceed capacity {self.capacity}")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(
                Box.from_array(self.boxes[i]),
                (float(self.velocity[i, 0]), float(self.velocity[i, 1])),
                float(self.score[i]),
                int(self.ids[i]),
                int(self.age[i]),
            )
            for i in range(len(self))
        ]

    def copy(self, **changes) -> "ParticleSet":
        attrs = dict(
            capacity=self.capacity,
            frame_size=self.frame_size,
            boxes=self.boxes.copy(),
            velocity=self.velocity.copy(),
            score=self.score.copy(),
            ids=self.ids.copy(),
            age=self.age.copy(),
            next_id=self.next_id,
        )
        attrs.update(changes)
        return ParticleSet(**attrs)

    def centers(self) -> np.ndarray:
        return self.boxes[:, :2] + self.boxes[:, 2:] / 2.0


def pf_predict(pset: ParticleSet, dt: float = 1.0) -> ParticleSet:
    if dt <= 0:
        raise ValueError("dt must be positive")
    boxes = pset.boxes.copy()
    boxes[:, :2] += pset.velocity * dt
    return pset.copy(boxes=boxes, age=pset.age + 1)


def pf_measure(pset: ParticleSet, detections, cfg: ParticleConfig = ParticleConfig()) -> ParticleSet:
    """Correct particles against detections and rescore them.

    Matched particles move a fraction ``cfg.interp`` of the way to their
    detection (all four box components); velocity blends toward the observed
    centre displacement since the previous frame; score becomes
    ``iou * confidence``. Unmatched particles decay by ``cfg.decay``.
    """
    dets = as_batch(detections)
    out = pset.copy()
    out.score *= cfg.decay
    if len(pset) == 0 or len(dets) == 0:
        return out
    overlap = iou_matrix(pset.boxes, dets.boxes)
    assignment = greedy_from_matrix(overlap, cfg.assign_iou)
    if not assignment.pairs:
        return out
    pi = np.array([p[0] for p in assignment.pairs], dtype=int)
    di = np.array([p[1] for p in assignment.pairs], dtype=int)
    q = np.array([p[2] for p in assignment.pairs])
    lam = cfg.interp
    det_boxes = dets.boxes[di]
    old_center = pset.boxes[pi, :2] + pset.boxes[pi, 2:] / 2.0
    det_center = det_boxes[:, :2] + det_boxes[:, 2:] / 2.0
    # The particle was already propagated by velocity * dt this frame.
    displacement = (det_center - old_center) + pset.velocity[pi] * cfg.dt
    out.boxes[pi] = (1.0 - lam) * pset.boxes[pi] + lam * det_boxes
    out.velocity[pi] = (1.0 - lam) * pset.velocity[pi] + lam * displacement / cfg.dt
    out.score[pi] = q * dets.confidence[di]
    return out


def pf_resample(
    pset: ParticleSet,
    detections,
    rng: np.random.Generator,
    cfg: ParticleConfig = ParticleConfig(),
) -> ParticleSet:
    """Kill the weakest particles and refill the population to capacity.

    Refill draws either spawn on a detection that no survivor covers (with
    probability ``cfg.bias``) or clone a survivor chosen proportionally to
    score. Both get Gaussian positional jitter. With no survivors the clone
    path spawns on detections, or on uniform background boxes if there are
    none.
    """
    dets = as_batch(detections)
    n = len(pset)
    order = np.argsort(pset.score, kind="stable")
    n_kill = int(np.floor(cfg.kill_fraction * n))
    survivors = np.sort(order[n_kill:])
    keep_boxes = pset.boxes[survivors]
    keep_score = pset.score[survivors]
    n_new = pset.capacity - len(survivors)
    next_id = pset.next_id
    if n_new <= 0:
        return pset.copy(
            boxes=keep_boxes,
            velocity=pset.velocity[survivors],
            score=keep_score,
            ids=pset.ids[survivors],
            age=pset.age[survivors],
        )

    if len(dets) and len(survivors):
        coverage = iou_matrix(dets.boxes, keep_boxes).max(axis=1)
        uncovered = np.nonzero(coverage < cfg.coverage_iou)[0]
    else:
        uncovered = np.arange(len(dets))

    spawn = rng.random(n_new) < cfg.bias
    pick = rng.random(n_new)
    jitter = rng.normal(0.0, cfg.jitter, size=(n_new, 2)) if cfg.jitter > 0 else np.zeros((n_new, 2))
    new_boxes = np.zeros((n_new, 4))
    new_vel = np.zeros((n_new, 2))
    new_score = np.zeros(n_new)

    if len(uncovered):
        use_spawn = spawn
    else:
        use_spawn = np.zeros(n_new, dtype=bool)
    s_idx = np.nonzero(use_spawn)[0]
    if len(s_idx):
        chosen = uncovered[np.minimum((pick[s_idx] * len(uncovered)).astype(int), len(uncovered) - 1)]
        new_boxes[s_idx] = dets.boxes[chosen]
        new_score[s_idx] = dets.confidence[chosen]

    c_idx = np.nonzero(~use_spawn)[0]
    if len(c_idx):
        if len(survivors):
            weights = np.maximum(keep_score, 0.0)
            total = weights.sum()
            cdf = np.cumsum(weights / total) if total > 0 else np.arange(1, len(weights) + 1) / len(weights)
            parent = np.minimum(np.searchsorted(cdf, pick[c_idx], side="right"), len(survivors) - 1)
            new_boxes[c_idx] = keep_boxes[parent]
            new_vel[c_idx] = pset.velocity[survivors][parent]
            new_score[c_idx] = keep_score[parent]
        elif len(dets):
            chosen = np.minimum((pick[c_idx] * len(dets)).astype(int), len(dets) - 1)
            new_boxes[c_idx] = dets.boxes[chosen]
            new_score[c_idx] = dets.confidence[chosen]
        else:
            w, h = cfg.background_size
            fw, fh = pset.frame_size
            u = rng.random((len(c_idx), 2))
            new_boxes[c_idx] = np.column_stack(
                [u[:, 0] * max(fw - w, 0.0), u[:, 1] * max(fh - h, 0.0), np.full(len(c_idx), w), np.full(len(c_idx), h)]
            )
    new_boxes[:, :2] += jitter

    return ParticleSet(
        pset.capacity,
        pset.frame_size,
        boxes=np.concatenate([keep_boxes, new_boxes]),
        velocity=np.concatenate([pset.velocity[survivors], new_vel]),
        score=np.concatenate([keep_score, new_score]),
        ids=np.concatenate([pset.ids[survivors], np.arange(next_id, next_id + n_new)]),
        age=np.concatenate([pset.age[survivors], np.zeros(n_new, dtype=int)]),
        next_id=next_id + n_new,
    )


def pf_emit(pset: ParticleSet, min_score: float = 0.5, nms_iou: float = 0.5) -> DetectionBatch:
    if len(pset) == 0:
        return DetectionBatch.empty()
    conf = np.minimum(pset.score, 1.0)
    # Suppressors always outscore their victims, so cutting first is exact.
    cand = np.nonzero(conf > min_score)[0]
    keep = cand[nms_indices(pset.boxes[cand], conf[cand], nms_iou)]
    return DetectionBatch(pset.boxes[keep], conf[keep], track_id=pset.ids[keep])


# --- Kalman baseline -------------------------------------------------------

_H = np.hstack([np.eye(4), np.zeros((4, 2))])
_MIN_EXTENT = 1e-3


@dataclass
class KalmanTrack:
    """Constant-velocity box track. ``state`` is ``(cx, cy, w, h, vx, vy)``."""

    state: np.ndarray
    covariance: np.ndarray
    id: int
    misses: int = 0
    confidence: float = 1.0

    @classmethod
    def from_box(cls, box: Box, track_id: int, confidence: float = 1.0, cfg: KalmanConfig = KalmanConfig()):
        cx, cy, w, h = box.to_center()
        return cls(
            np.array([cx, cy, w, h, 0.0, 0.0]),
            np.diag(np.asarray(cfg.initial_variance, dtype=float)),
            track_id,
            0,
            confidence,
        )

    @property
    def box(self) -> Box:
        cx, cy, w, h = self.state[:4]
        return Box.from_center(float(cx), float(cy), float(max(w, 0.0)), float(max(h, 0.0)))


def transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[0, 4] = dt
    F[1, 5] = dt
    return F


def kf_predict(track: KalmanTrack, dt: float = 1.0, process_noise=KalmanConfig().process_noise) -> KalmanTrack:
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = transition(dt)
    P = F @ track.covariance @ F.T + np.diag(np.asarray(process_noise, dtype=float))
    return replace(track, state=F @ track.state, covariance=(P + P.T) / 2.0)


def kf_update(track: KalmanTrack, z, measurement_noise=KalmanConfig().measurement_noise) -> KalmanTrack:
    """Standard gain correction with the Joseph-form covariance update."""
    z = np.asarray(Box.to_center(z) if isinstance(z, Box) else z, dtype=float).reshape(4)
    if not np.isfinite(z).all():
        raise CorruptMeasurementError(f"non-finite measurement {z.tolist()}")
    R = np.diag(np.asarray(measurement_noise, dtype=float))
    P = track.covariance
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S.T, (P @ _H.T).T).T
    x = track.state + K @ (z - _H @ track.state)
    A = np.eye(6) - K @ _H
    P = A @ P @ A.T + K @ R @ K.T
    P = (P + P.T) / 2.0
    x[2] = max(x[2], _MIN_EXTENT)
    x[3] = max(x[3], _MIN_EXTENT)
    return replace(track, state=x, covariance=P)


@dataclass
class KalmanState:
    tracks: list[KalmanTrack] = field(default_factory=list)
    next_id: int = 0


def _predict_many(X: np.ndarray, P: np.ndarray, dt: float, q) -> tuple[np.ndarray, np.ndarray]:
    F = transition(dt)
    P = F @ P @ F.T + np.diag(np.asarray(q, dtype=float))
    return X @ F.T, (P + np.swapaxes(P, 1, 2)) / 2.0


def _update_many(X, P, Z, r) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`kf_update` over stacked states and measurements."""
    if not np.isfinite(Z).all():
        raise CorruptMeasurementError("non-finite measurement in batch")
    R = np.diag(np.asarray(r, dtype=float))
    S = P[:, :4, :4] + R
    # S is symmetric, so K^T = S^-1 (H P).
    K = np.swapaxes(np.linalg.solve(S, P[:, :4, :]), 1, 2)
    X = X + np.einsum("kij,kj->ki", K, Z - X[:, :4])
    A = np.eye(6) - K @ _H
    P = A @ P @ np.swapaxes(A, 1, 2) + K @ R @ np.swapaxes(K, 1, 2)
    X[:, 2:4] = np.maximum(X[:, 2:4], _MIN_EXTENT)
    return X, (P + np.swapaxes(P, 1, 2)) / 2.0


def _corner_boxes(X: np.ndarray) -> np.ndarray:
    wh = np.maximum(X[:, 2:4], 0.0)
    return np.column_stack([X[:, :2] - wh / 2.0, wh])


def kf_pipeline_step(
    state: KalmanState, detections, cfg: KalmanConfig = KalmanConfig()
) -> tuple[KalmanState, DetectionBatch]:
    """One frame of the tracking-by-detection Kalman baseline.

    Tracks that miss more than ``cfg.max_misses`` consecutive frames are
    pruned; all live tracks are emitted with their last matched confidence
    decayed once per miss. Tracks are filtered as one stacked batch; the
    result equals applying :func:`kf_predict` and :func:`kf_update` per track.
    """
    dets = as_batch(detections)
    k = len(state.tracks)
    X = np.array([t.state for t in state.tracks], dtype=float).reshape(k, 6)
    P = np.array([t.covariance for t in state.tracks], dtype=float).reshape(k, 6, 6)
    misses = np.array([t.misses for t in state.tracks], dtype=int)
    conf = np.array([t.confidence for t in state.tracks], dtype=float)
    ids = np.array([t.id for t in state.tracks], dtype=int)
    if k:
        X, P = _predict_many(X, P, cfg.dt, cfg.process_noise)
    assignment = greedy_iou_assign(_corner_boxes(X), dets.boxes, cfg.assign_iou)
    if assignment.pairs:
        ti = np.array([p[0] for p in assignment.pairs])
        dj = np.array([p[1] for p in assignment.pairs])
        X[ti], P[ti] = _update_many(X[ti], P[ti], to_center(dets.boxes[dj]), cfg.measurement_noise)
        conf[ti] = dets.confidence[dj]
        hit = np.zeros(k, dtype=bool)
        hit[ti] = True
    else:
        hit = np.zeros(k, dtype=bool)
    misses = np.where(hit, 0, misses + 1)
    alive = misses <= cfg.max_misses
    spawn = [j for j in assignment.unmatched_right if dets.confidence[j] >= cfg.spawn_conf]
    next_id = state.next_id + len(spawn)
    live = [
        KalmanTrack(X[i], P[i], int(ids[i]), int(misses[i]), float(conf[i])) for i in np.nonzero(alive)[0]
    ]
    for n, j in enumerate(spawn):
        live.append(KalmanTrack.from_box(dets[j].box, state.next_id + n, float(dets.confidence[j]), cfg))
    emitted = DetectionBatch(
        np.array([t.box.as_array() for t in live]).reshape(-1, 4),
        np.array([t.confidence * cfg.decay**t.misses for t in live]),
        track_id=np.array([t.id for t in live], dtype=int),
    )
    return KalmanState(live, next_id), emitted
