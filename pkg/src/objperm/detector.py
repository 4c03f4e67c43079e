"""Two-stage detector interface with synthetic and file-replay implementations.

A detector exposes a proposal stage, ``propose(frame)``, and a scoring /
refinement stage, ``refine(frame, proposals)``, that returns exactly one
detection per proposal in input order. Neither call mutates the detector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import expit

from .config import SyntheticDetectorConfig
from .geometry import Box, DetectionBatch, boxes_array, iou_matrix
from .world import World, WorldSpec


@dataclass(frozen=True)
class Proposal:
    box: Box
    objectness: float

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must lie in [0, 1], got {self.objectness}")


class ProposalBatch:
    __slots__ = ("boxes", "objectness")

    def __init__(self, boxes, objectness):
        self.boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        self.objectness = np.asarray(objectness, dtype=float).reshape(len(self.boxes))

    @classmethod
    def empty(cls) -> "ProposalBatch":
        return cls(np.zeros((0, 4)), np.zeros(0))

    @classmethod
    def from_list(cls, proposals: Iterable[Proposal]) -> "ProposalBatch":
        props = list(proposals)
        if not props:
            return cls.empty()
        return cls([p.box.as_array() for p in props], [p.objectness for p in props])

    def __len__(self) -> int:
        return len(self.boxes)

    def __getitem__(self, i: int) -> Proposal:
        return Proposal(Box.from_array(self.boxes[i]), float(self.objectness[i]))

    def to_list(self) -> list[Proposal]:
        return [self[i] for i in range(len(self))]

    def rows(self) -> list[tuple]:
        return [(*map(float, self.boxes[i]), float(self.objectness[i])) for i in range(len(self))]

    @staticmethod
    def concat(batches: Sequence["ProposalBatch"]) -> "ProposalBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            return ProposalBatch.empty()
        if len(batches) == 1:
            return batches[0]
        return ProposalBatch(
            np.concatenate([b.boxes for b in batches]), np.concatenate([b.objectness for b in batches])
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProposalBatch):
            return NotImplemented
        return np.array_equal(self.boxes, other.boxes) and np.array_equal(self.objectness, other.objectness)

    def __repr__(self) -> str:
        return f"ProposalBatch(n={len(self)})"


def as_proposals(proposals) -> ProposalBatch:
    if isinstance(proposals, ProposalBatch):
        return proposals
    return ProposalBatch.from_list(proposals)


class TwoStageDetector(Protocol):
    frame_size: tuple[float, float]
    frames: int

    def propose(self, frame: int) -> ProposalBatch: ...

    def refine(self, frame: int, proposals) -> DetectionBatch: ...


def proposal_probability(v, cfg: SyntheticDetectorConfig):
    """Chance that the simulated RPN proposes an agent at visibility ``v``."""
    v = np.asarray(v, dtype=float)
    span = cfg.rpn_visibility_cutoff - cfg.visibility_floor
    p = np.minimum(1.0, (v - cfg.visibility_floor) / span)
    return np.where(v < cfg.visibility_floor, 0.0, p)


def refine_confidence(v, q, objectness, cfg: SyntheticDetectorConfig):
    """Second-stage score given visibility ``v`` of and overlap ``q`` with the best-matching agent."""
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    matched = expit(cfg.score_visibility * v + cfg.score_overlap * q - cfg.score_offset)
    background = expit(-cfg.score_offset) * np.asarray(objectness, dtype=float)
    return np.where(q > 0, matched, background)


class SyntheticDetector:
    """World-driven stand-in for a two-stage detector.

    Random streams are keyed by ``(seed, frame, stage)`` so any frame can be
    proposed or refined in any order with identical results. The refinement
    noise for proposal ``i`` depends only on ``i``: appending proposals never
    changes the refinement of the earlier ones.
    """

    def __init__(self, world, cfg: SyntheticDetectorConfig = SyntheticDetectorConfig(), seed: int = 0):
        cfg.validate()
        if isinstance(world, WorldSpec):
            world = World(world, agent_occlusion=cfg.agent_occlusion)
        self.world = world
        self.cfg = cfg
        self.seed = int(seed)

    @property
    def frame_size(self) -> tuple[float, float]:
        return self.world.frame_size

    @property
    def frames(self) -> int:
        return self.world.frames

    def _rng(self, frame: int, stage: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, int(frame), stage])

    def propose(self, frame: int) -> ProposalBatch:
        if not 0 <= frame < self.world.frames:
            raise IndexError(f"frame {frame} outside [0, {self.world.frames})")
        cfg = self.cfg
        rng = self._rng(frame, 0)
        truth = self.world.truth(frame)
        n = len(truth)
        draw = rng.random(n)
        shift = rng.normal(0.0, cfg.rpn_jitter, size=(n, 2))
        scale = rng.uniform(1.0 - cfg.rpn_size_jitter, 1.0 + cfg.rpn_size_jitter, size=(n, 2))
        hit = draw < proposal_probability(truth.visibility, cfg)
        centers = truth.boxes[:, :2] + truth.boxes[:, 2:] / 2.0 + shift
        sizes = truth.boxes[:, 2:] * scale
        agent_boxes = np.column_stack([centers - sizes / 2.0, sizes])[hit]
        agent_obj = truth.visibility[hit]

        nb = cfg.background_proposals
        fw, fh = self.world.frame_size
        lo, hi = cfg.background_size
        wh = rng.uniform(lo, hi, size=(nb, 2))
        wh = np.minimum(wh, [fw, fh])
        corner = rng.random((nb, 2)) * (np.array([fw, fh]) - wh)
        bg_obj = rng.uniform(0.0, cfg.background_objectness, size=nb)
        return ProposalBatch(
            np.concatenate([agent_boxes, np.column_stack([corner, wh])]),
            np.concatenate([agent_obj, bg_obj]),
        )

    def refine(self, frame: int, proposals) -> DetectionBatch:
        props = as_proposals(proposals)
        n = len(props)
        if n == 0:
            return DetectionBatch.empty()
        cfg = self.cfg
        rng = self._rng(frame, 1)
        noise = rng.normal(0.0, cfg.refine_noise, size=(n, 4)) if cfg.refine_noise > 0 else np.zeros((n, 4))
        truth = self.world.truth(frame) if 0 <= frame < self.world.frames else None
        if truth is None or len(truth) == 0:
            conf = refine_confidence(np.zeros(n), np.zeros(n), props.objectness, cfg)
            return DetectionBatch(props.boxes.copy(), conf)
        overlap = iou_matrix(props.boxes, truth.boxes)
        q = overlap.max(axis=1)
        # Exact IoU ties (coincident agents) go to the more visible agent.
        best = np.where(overlap == q[:, None], truth.visibility[None, :], -1.0).argmax(axis=1)
        v = truth.visibility[best]
        conf = refine_confidence(v, q, props.objectness, cfg)
        pull = cfg.refine_pull * np.maximum(v, cfg.visibility_floor)
        refined = props.boxes + pull[:, None] * (truth.boxes[best] - props.boxes) + noise
        refined[:, 2:] = np.maximum(refined[:, 2:], 1.0)
        boxes = np.where((q > 0)[:, None], refined, props.boxes)
        return DetectionBatch(boxes, np.clip(conf, 0.0, 1.0))


class ReplayDetector:
    """Serves stored per-frame detections (e.g. MOT ``det.txt``) as a detector.

    ``propose(t)`` returns the file's boxes for frame ``t`` (0-based; file
    frame ``t + 1``). ``refine`` can only re-score boxes: each proposal is
    matched to its highest-IoU stored detection of that frame, scored
    ``confidence * IoU`` and keeps its own box.
    """

    def __init__(self, records: Mapping[int, Sequence], frame_size=(1920.0, 1080.0), frames: int | None = None):
        self._boxes: dict[int, np.ndarray] = {}
        self._conf: dict[int, np.ndarray] = {}
        for f, rows in records.items():
            rows = list(rows)
            self._boxes[f - 1] = boxes_array([r.box for r in rows])
            self._conf[f - 1] = np.clip(np.array([r.conf for r in rows], dtype=float), 0.0, 1.0)
        self.frame_size = (float(frame_size[0]), float(frame_size[1]))
        self.frames = int(frames) if frames is not None else (max(records) if records else 0)

    @classmethod
    def from_file(cls, path, frame_size=(1920.0, 1080.0)) -> "ReplayDetector":
        from .io import parse_mot

        return cls(parse_mot(path), frame_size)

    def propose(self, frame: int) -> ProposalBatch:
        boxes = self._boxes.get(frame)
        if boxes is None:
            return ProposalBatch.empty()
        return ProposalBatch(boxes.copy(), self._conf[frame].copy())

    def refine(self, frame: int, proposals) -> DetectionBatch:
        props = as_proposals(proposals)
        boxes = self._boxes.get(frame)
        if len(props) == 0:
            return DetectionBatch.empty()
        if boxes is None or len(boxes) == 0:
            return DetectionBatch(props.boxes.copy(), np.zeros(len(props)))
        overlap = iou_matrix(props.boxes, boxes)
        best = overlap.argmax(axis=1)
        score = overlap[np.arange(len(props)), best] * self._conf[frame][best]
        return DetectionBatch(props.boxes.copy(), np.clip(score, 0.0, 1.0))
