"""Configuration dataclasses for detectors, filters and pipelines.

Every field has a default, so a run config only needs to name what it
changes. ``validate()`` checks ranges; the JSON loader in :mod:`objperm.io`
rejects unknown keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

PIPELINES = ("plain", "kf", "pf", "iop-lite", "iop-history", "iop-particles")
DETECTORS = ("synthetic", "replay", "external")
PARTICLE_GRID = (50, 75, 100, 200)


def _unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class SyntheticDetectorConfig:
    """Knobs of the simulated two-stage detector.

    The score coefficients and visibility thresholds are calibrated by
    ``scripts/calibrate_detector.py``; see the README for the contract.
    """

    rpn_visibility_cutoff: float = 0.6
    visibility_floor: float = 0.4
    rpn_jitter: float = 6.0
    rpn_size_jitter: float = 0.1
    background_proposals: int = 20
    background_size: tuple[float, float] = (16.0, 160.0)
    background_objectness: float = 0.3
    score_visibility: float = 24.0
    score_overlap: float = 17.5
    score_offset: float = 17.7
    refine_pull: float = 1.0
    refine_noise: float = 1.0
    agent_occlusion: bool = True

    def validate(self) -> None:
        _unit("rpn_visibility_cutoff", self.rpn_visibility_cutoff)
        _unit("visibility_floor", self.visibility_floor)
        _unit("refine_pull", self.refine_pull)
        _unit("background_objectness", self.background_objectness)
        if self.rpn_visibility_cutoff <= self.visibility_floor:
            raise ValueError("rpn_visibility_cutoff must exceed visibility_floor")
        if self.rpn_jitter < 0 or self.refine_noise < 0 or self.rpn_size_jitter < 0:
            raise ValueError("noise levels must be non-negative")
        if self.background_proposals < 0:
            raise ValueError("background_proposals must be non-negative")
        lo, hi = self.background_size
        if not 0 < lo <= hi:
            raise ValueError("background_size must be an increasing positive range")


@dataclass
class ParticleConfig:
    capacity: int = 200
    interp: float = 0.5
    decay: float = 0.5
    kill_fraction: float = 0.25
    bias: float = 0.7
    coverage_iou: float = 0.3
    jitter: float = 2.0
    assign_iou: float = 0.3
    min_score: float = 0.5
    nms_iou: float = 0.5
    dt: float = 1.0
    background_size: tuple[float, float] = (40.0, 100.0)

    def validate(self) -> None:
        for name in ("interp", "decay", "kill_fraction", "bias", "coverage_iou", "assign_iou", "min_score", "nms_iou"):
            _unit(name, getattr(self, name))
        if self.capacity < 0:
            raise ValueError("capacity must be non-negative")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class KalmanConfig:
    process_noise: tuple[float, ...] = (1.0, 1.0, 0.25, 0.25, 0.5, 0.5)
    measurement_noise: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    initial_variance: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 10.0, 10.0)
    assign_iou: float = 0.3
    spawn_conf: float = 0.5
    max_misses: int = 5
    decay: float = 0.9
    dt: float = 1.0

    def validate(self) -> None:
        if len(self.process_noise) != 6 or len(self.initial_variance) != 6:
            raise ValueError("process_noise and initial_variance need 6 entries")
        if len(self.measurement_noise) != 4:
            raise ValueError("measurement_noise needs 4 entries")
        if min(self.process_noise) < 0 or min(self.measurement_noise) < 0 or min(self.initial_variance) < 0:
            raise ValueError("noise variances must be non-negative")
        for name in ("assign_iou", "spawn_conf", "decay"):
            _unit(name, getattr(self, name))
        if self.max_misses < 0:
            raise ValueError("max_misses must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class IopConfig:
    feedback_conf: float = 0.3
    emit_conf: float = 0.5
    nms_iou: float = 0.5
    history: int = 1
    particles: int = 200
    assign_iou: float = 0.3
    dedup_iou: float = 0.95

    def validate(self) -> None:
        for name in ("feedback_conf", "emit_conf", "nms_iou", "assign_iou", "dedup_iou"):
            _unit(name, getattr(self, name))
        if self.history < 1:
            raise ValueError("history must be at least 1")
        if self.particles < 0:
            raise ValueError("particles must be non-negative")


@dataclass
class RunConfig:
    pipeline: str = "iop-lite"
    detector: str = "synthetic"
    preset: Optional[str] = None
    world: Optional[str] = None
    det_file: Optional[str] = None
    external_command: Optional[list[str]] = None
    external_timeout: float = 10.0
    frame_size: Optional[tuple[float, float]] = None
    seed: int = 0
    synthetic: SyntheticDetectorConfig = field(default_factory=SyntheticDetectorConfig)
    iop: IopConfig = field(default_factory=IopConfig)
    pf: ParticleConfig = field(default_factory=ParticleConfig)
    kf: KalmanConfig = field(default_factory=KalmanConfig)

    def validate(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}; expected one of {', '.join(PIPELINES)}")
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}; expected one of {', '.join(DETECTORS)}")
        if self.detector == "synthetic" and (self.preset is None) == (self.world is None):
            raise ValueError("synthetic detector needs exactly one of 'preset' or 'world'")
        if self.detector in ("replay", "external") and self.det_file is None:
            raise ValueError(f"{self.detector} detector needs 'det_file'")
        if self.detector == "external" and not self.external_command:
            raise ValueError("external detector needs 'external_command'")
        if self.external_timeout <= 0:
            raise ValueError("external_timeout must be positive")
        self.synthetic.validate()
        self.iop.validate()
        self.pf.validate()
        self.kf.validate()
