"""Per-frame latency of pipelines on identical input streams.

Every pipeline is rebuilt for each repetition around its own
:class:`TimedDetector`, which books the time spent inside ``propose`` and
``refine``. The remainder of a step is the pipeline's own (non-detector)
cost. Steps run strictly serially on one thread.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detector import TwoStageDetector

WARMUP_FRAMES = 10


class TimedDetector:
    """Transparent detector proxy that accumulates time spent in the detector."""

    def __init__(self, inner: TwoStageDetector, clock: Callable[[], float] = time.perf_counter):
        self.inner = inner
        self.clock = clock
        self.elapsed = 0.0

    @property
    def frame_size(self):
        return self.inner.frame_size

    @property
    def frames(self) -> int:
        return self.inner.frames

    def propose(self, frame):
        t0 = self.clock()
        try:
            return self.inner.propose(frame)
        finally:
            self.elapsed += self.clock() - t0

    def refine(self, frame, proposals):
        t0 = self.clock()
        try:
            return self.inner.refine(frame, proposals)
        finally:
            self.elapsed += self.clock() - t0


@dataclass
class PipelineTiming:
    mean_ms: float
    detector_ms: float
    non_detector_ms: float
    overhead_ms: float = 0.0
    non_detector_overhead_ms: float = 0.0
    samples: int = 0
    rep_means_ms: list = field(default_factory=list)


@dataclass
class LatencyReport:
    baseline: str
    frames: int
    repetitions: int
    pipelines: dict[str, PipelineTiming]

    def overhead(self, name: str) -> float:
        return self.pipelines[name].overhead_ms

    def to_dict(self) -> dict:
        return {
            "schema": "objperm.latency/1",
            "baseline": self.baseline,
            "frames": self.frames,
            "repetitions": self.repetitions,
            "pipelines": {k: vars(v) for k, v in self.pipelines.items()},
        }


def bench_latency(
    factories: dict[str, Callable[[TwoStageDetector], object]] | Sequence[tuple[str, Callable]],
    detector: TwoStageDetector,
    frames: int,
    repetitions: int = 3,
    baseline: str = "plain",
    warmup: int = WARMUP_FRAMES,
) -> LatencyReport:
    """Time every pipeline over frames ``0 .. frames-1`` of ``detector``.

    ``factories`` maps a pipeline name to a callable building a fresh pipeline
    around the detector it is given. Overheads are taken against ``baseline``,
    which must be among the factories.
    """
    items = list(factories.items()) if isinstance(factories, dict) else list(factories)
    names = [n for n, _ in items]
    if baseline not in names:
        raise ValueError(f"baseline {baseline!r} is not among the benchmarked pipelines")
    if frames > detector.frames:
        raise ValueError(f"detector only has {detector.frames} frames, {frames} requested")
    effective = (frames - warmup) * repetitions
    if effective < 100:
        raise ValueError(f"need at least 100 timed frames per pipeline, got {effective}")

    step_times = {n: [] for n in names}
    det_times = {n: [] for n in names}
    k = len(items)
    for _ in range(repetitions):
        timed = [TimedDetector(detector) for _ in items]
        pipes = [factory(d) for (_, factory), d in zip(items, timed)]
        total = np.zeros((k, frames))
        inner = np.zeros((k, frames))
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            # Frame-level round robin with a rotating start: host drift and
            # cache effects hit every pipeline alike.
            for t in range(frames):
                for r in range(k):
                    i = (t + r) % k
                    timed[i].elapsed = 0.0
                    t0 = time.perf_counter()
                    pipes[i].step(t)
                    total[i, t] = time.perf_counter() - t0
                    inner[i, t] = timed[i].elapsed
        finally:
            if gc_was_enabled:
                gc.enable()
        for i, name in enumerate(names):
            step_times[name].append(total[i, warmup:])
            det_times[name].append(inner[i, warmup:])

    out = {}
    for name in names:
        total = np.concatenate(step_times[name]) * 1e3
        inner = np.concatenate(det_times[name]) * 1e3
        out[name] = PipelineTiming(
            mean_ms=float(total.mean()),
            detector_ms=float(inner.mean()),
            non_detector_ms=float((total - inner).mean()),
            samples=len(total),
            rep_means_ms=[float(r.mean() * 1e3) for r in step_times[name]],
        )
    base = out[baseline]
    for t in out.values():
        t.overhead_ms = t.mean_ms - base.mean_ms
        t.non_detector_overhead_ms = t.non_detector_ms - base.non_detector_ms
    return LatencyReport(baseline, frames, repetitions, out)
