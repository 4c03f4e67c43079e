"""Stateful per-sequence pipelines behind one ``step(frame) -> FrameTrace`` interface."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .config import IopConfig, KalmanConfig, ParticleConfig, RunConfig
from .detector import TwoStageDetector
from .filters import KalmanState, ParticleSet, kf_pipeline_step, pf_emit, pf_measure, pf_predict, pf_resample
from .geometry import DetectionBatch
from .iop import (
    FeedbackBuffer,
    FrameTrace,
    ParticleIopState,
    assign_ids,
    iop_history_step,
    iop_lite_step,
    iop_particles_step,
    plain_step,
)


class Pipeline:
    name = "base"

    def __init__(self, detector: TwoStageDetector, iop: IopConfig = IopConfig()):
        self.detector = detector
        self.iop = iop
        self._prev: Optional[DetectionBatch] = None
        self._next_id = 1

    def _identify(self, trace: FrameTrace) -> FrameTrace:
        trace.emitted, self._next_id = assign_ids(self._prev, trace.emitted, self._next_id, self.iop.assign_iou)
        self._prev = trace.emitted
        return trace

    def step(self, frame: int) -> FrameTrace:
        raise NotImplementedError


class PlainPipeline(Pipeline):
    name = "plain"

    def step(self, frame):
        return self._identify(plain_step(self.detector, frame, self.iop))


class IopLitePipeline(Pipeline):
    name = "iop-lite"

    def __init__(self, detector, iop=IopConfig()):
        super().__init__(detector, iop)
        self.buffer = FeedbackBuffer(1)

    def step(self, frame):
        trace, self.buffer = iop_lite_step(self.buffer, self.detector, frame, self.iop)
        return self._identify(trace)


class IopHistoryPipeline(Pipeline):
    name = "iop-history"

    def __init__(self, detector, iop=IopConfig()):
        super().__init__(detector, iop)
        self.buffer = FeedbackBuffer(iop.history)

    def step(self, frame):
        trace, self.buffer = iop_history_step(self.buffer, self.detector, frame, self.iop)
        return self._identify(trace)


class IopParticlesPipeline(Pipeline):
    name = "iop-particles"

    def __init__(self, detector, iop=IopConfig(), pf: ParticleConfig = ParticleConfig(), seed: int = 0):
        super().__init__(detector, iop)
        self.pf = pf
        self.rng = np.random.default_rng([seed, 2])
        self.state = ParticleIopState.initial(iop, detector.frame_size)

    def step(self, frame):
        trace, self.state = iop_particles_step(self.state, self.detector, frame, self.iop, self.pf, self.rng)
        return self._identify(trace)


class KalmanPipeline(Pipeline):
    """Plain detector followed by the Kalman tracker; identities come from tracks."""

    name = "kf"

    def __init__(self, detector, iop=IopConfig(), kf: KalmanConfig = KalmanConfig()):
        super().__init__(detector, iop)
        self.kf = kf
        self.state = KalmanState(next_id=1)

    def step(self, frame):
        trace = plain_step(self.detector, frame, self.iop)
        self.state, trace.emitted = kf_pipeline_step(self.state, trace.emitted, self.kf)
        return trace


class ParticlePipeline(Pipeline):
    """Plain detector followed by the decoupled particle filter.

    Surviving particles are resampled every frame, so particle ids do not
    persist; output identities come from frame-to-frame IoU carry-over.
    """

    name = "pf"

    def __init__(self, detector, iop=IopConfig(), pf: ParticleConfig = ParticleConfig(), seed: int = 0):
        super().__init__(detector, iop)
        self.pf = pf
        self.rng = np.random.default_rng([seed, 3])
        self.particles = ParticleSet(pf.capacity, detector.frame_size, next_id=1)

    def step(self, frame):
        trace = plain_step(self.detector, frame, self.iop)
        dets = trace.emitted
        p = pf_resample(self.particles, dets, self.rng, self.pf)
        p = pf_measure(p, dets, self.pf)
        trace.emitted = pf_emit(p, self.pf.min_score, self.pf.nms_iou)
        self.particles = pf_predict(p, self.pf.dt)
        return self._identify(trace)


def make_pipeline(
    name: str,
    detector: TwoStageDetector,
    iop: IopConfig = IopConfig(),
    pf: ParticleConfig = ParticleConfig(),
    kf: KalmanConfig = KalmanConfig(),
    seed: int = 0,
) -> Pipeline:
    if name == "plain":
        return PlainPipeline(detector, iop)
    if name == "iop-lite":
        return IopLitePipeline(detector, iop)
    if name == "iop-history":
        return IopHistoryPipeline(detector, iop)
    if name == "iop-particles":
        return IopParticlesPipeline(detector, iop, pf, seed)
    if name == "kf":
        return KalmanPipeline(detector, iop, kf)
    if name == "pf":
        return ParticlePipeline(detector, iop, pf, seed)
    raise ValueError(f"unknown pipeline {name!r}")


def pipeline_from_config(cfg: RunConfig, detector: TwoStageDetector) -> Pipeline:
    return make_pipeline(cfg.pipeline, detector, cfg.iop, cfg.pf, cfg.kf, cfg.seed)


def run_sequence(pipeline: Pipeline, frames: Optional[int] = None, on_frame: Callable | None = None) -> list[FrameTrace]:
    n = pipeline.detector.frames if frames is None else frames
    traces = []
    for t in range(n):
        trace = pipeline.step(t)
        traces.append(trace)
        if on_frame is not None:
            on_frame(trace)
    return traces
