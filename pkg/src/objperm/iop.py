"""Feedback-loop detection: previous predictions re-enter the second stage as proposals.

Three variants share one skeleton. *Lite* appends last frame's emitted
boxes to the RPN proposals. *History* appends the emitted boxes of the last
N frames. *Particles* appends the boxes of a resampled particle set and feeds
the second-stage output back into the particles by IoU assignment.

The detector is only ever called through ``propose`` and ``refine``; nothing
here writes to it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .assignment import greedy_iou_assign
from .config import IopConfig, ParticleConfig
from .detector import ProposalBatch, TwoStageDetector
from .filters import ParticleSet, pf_measure, pf_predict, pf_resample
from .geometry import DetectionBatch, iou_matrix, nms


@dataclass
class FrameTrace:
    frame: int
    proposals: ProposalBatch
    refined: DetectionBatch
    emitted: DetectionBatch
    feedback: int = 0


class FeedbackBuffer:
    """Ring buffer of per-frame emitted detections, iterated newest first."""

    def __init__(self, capacity: int = 1, slots=()):
        if capacity < 1:
            raise ValueError("history capacity must be at least 1")
        self.capacity = capacity
        self._slots = deque(slots, maxlen=capacity)

    def push(self, emitted: DetectionBatch) -> "FeedbackBuffer":
        """Return a new buffer with ``emitted`` as the newest slot."""
        out = FeedbackBuffer(self.capacity, self._slots)
        out._slots.appendleft(emitted)
        return out

    def __iter__(self):
        return iter(self._slots)

    def __len__(self) -> int:
        return len(self._slots)


def emit(refined: DetectionBatch, cfg: IopConfig) -> DetectionBatch:
    """NMS followed by the confidence cut.

    Only higher-scoring boxes can suppress, so cutting first yields the same
    set at a fraction of the NMS cost.
    """
    confident = refined.take(np.nonzero(refined.confidence >= cfg.emit_conf)[0])
    return nms(confident, cfg.nms_iou)


def _as_feedback(dets: DetectionBatch, cfg: IopConfig) -> ProposalBatch:
    keep = dets.confidence >= cfg.feedback_conf
    return ProposalBatch(dets.boxes[keep], dets.confidence[keep])


def _second_stage(detector, frame, rpn, feedback, cfg) -> FrameTrace:
    proposals = ProposalBatch.concat([rpn, *feedback])
    refined = detector.refine(frame, proposals)
    return FrameTrace(frame, proposals, refined, emit(refined, cfg), len(proposals) - len(rpn))


def plain_step(detector: TwoStageDetector, frame: int, cfg: IopConfig = IopConfig()) -> FrameTrace:
    """Unmodified two-stage inference for one frame."""
    return _second_stage(detector, frame, detector.propose(frame), [], cfg)


def iop_lite_step(
    buffer: FeedbackBuffer, detector: TwoStageDetector, frame: int, cfg: IopConfig = IopConfig()
) -> tuple[FrameTrace, FeedbackBuffer]:
    if buffer.capacity != 1:
        raise ValueError("IOP lite keeps exactly one frame of feedback")
    feedback = [_as_feedback(prev, cfg) for prev in buffer]
    trace = _second_stage(detector, frame, detector.propose(frame), feedback, cfg)
    return trace, buffer.push(trace.emitted)


def history_feedback(buffer, cfg: IopConfig, skip_newest: bool = False) -> ProposalBatch:
    """Union of buffered predictions, newest first.

    Boxes from older frames that overlap an already collected box by more
    than ``cfg.dedup_iou`` are dropped. The newest frame is never deduplicated
    against itself.
    """
    slots = list(buffer)
    if skip_newest:
        slots = slots[1:]
    collected: list[ProposalBatch] = []
    seen = np.zeros((0, 4))
    for dets in slots:
        fb = _as_feedback(dets, cfg)
        if len(seen) and len(fb):
            dup = (iou_matrix(fb.boxes, seen) > cfg.dedup_iou).any(axis=1)
            fb = ProposalBatch(fb.boxes[~dup], fb.objectness[~dup])
        if len(fb):
            collected.append(fb)
            seen = np.concatenate([seen, fb.boxes])
    return ProposalBatch.concat(collected)


def iop_history_step(
    buffer: FeedbackBuffer, detector: TwoStageDetector, frame: int, cfg: IopConfig = IopConfig()
) -> tuple[FrameTrace, FeedbackBuffer]:
    trace = _second_stage(detector, frame, detector.propose(frame), [history_feedback(buffer, cfg)], cfg)
    return trace, buffer.push(trace.emitted)


@dataclass
class ParticleIopState:
    particles: ParticleSet
    last_emitted: Optional[DetectionBatch] = None
    history: FeedbackBuffer = field(default_factory=FeedbackBuffer)

    @classmethod
    def initial(cls, cfg: IopConfig, frame_size) -> "ParticleIopState":
        return cls(ParticleSet(cfg.particles, frame_size), None, FeedbackBuffer(cfg.history))


def iop_particles_step(
    state: ParticleIopState,
    detector: TwoStageDetector,
    frame: int,
    cfg: IopConfig,
    pf_cfg: ParticleConfig,
    rng: np.random.Generator,
) -> tuple[FrameTrace, ParticleIopState]:
    """Particle variant: resample, concatenate, refine, assign back, predict.

    Resampling is skipped until a previous frame has been emitted, so the
    first frame is plain inference. With ``cfg.history > 1`` the emitted boxes
    of frames t-2 .. t-N are appended as well; frame t-1 is already
    represented by the particles resampled on it.
    """
    particles = state.particles
    if state.last_emitted is not None:
        particles = pf_resample(particles, state.last_emitted, rng, pf_cfg)
    particle_props = ProposalBatch(particles.boxes, np.minimum(particles.score, 1.0))
    extra = [particle_props]
    if cfg.history > 1:
        extra.append(history_feedback(state.history, cfg, skip_newest=True))
    trace = _second_stage(detector, frame, detector.propose(frame), extra, cfg)
    particles = pf_measure(particles, trace.emitted, replace(pf_cfg, assign_iou=cfg.assign_iou))
    particles = pf_predict(particles, pf_cfg.dt)
    return trace, ParticleIopState(particles, trace.emitted, state.history.push(trace.emitted))


def assign_ids(
    previous: Optional[DetectionBatch], emitted: DetectionBatch, next_id: int, min_iou: float = 0.3
) -> tuple[DetectionBatch, int]:
    """Carry identities across frames by greedy IoU matching."""
    ids = np.full(len(emitted), -1, dtype=int)
    if previous is not None and len(previous) and len(emitted):
        for i, j, _ in greedy_iou_assign(previous.boxes, emitted.boxes, min_iou).pairs:
            ids[j] = previous.track_id[i]
    for j in range(len(emitted)):
        if ids[j] < 0:
            ids[j] = next_id
            next_id += 1
    return emitted.with_track_ids(ids), next_id
