"""Scripted ground-truth worlds: agents on piecewise-linear paths and static occluders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, boxes_array, clip_array, covered_area


@dataclass(frozen=True)
class Agent:
    id: int
    size: tuple[float, float]
    waypoints: tuple[tuple[int, float, float], ...]

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError(f"agent {self.id} has no waypoints")
        frames = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"agent {self.id}: waypoint frames must be strictly increasing")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"agent {self.id}: size must be positive")

    def center_at(self, frame: float):
        """Interpolated centre, or ``None`` outside the waypoint span."""
        wp = self.waypoints
        if frame < wp[0][0] or frame > wp[-1][0]:
            return None
        if len(wp) == 1:
            return (wp[0][1], wp[0][2])
        frames = [w[0] for w in wp]
        return (float(np.interp(frame, frames, [w[1] for w in wp])), float(np.interp(frame, frames, [w[2] for w in wp])))

    def box_at(self, frame: float):
        c = self.center_at(frame)
        if c is None:
            return None
        return Box.from_center(c[0], c[1], self.size[0], self.size[1])


@dataclass(frozen=True)
class WorldSpec:
    frame_size: tuple[float, float]
    frames: int
    agents: tuple[Agent, ...] = ()
    occluders: tuple[Box, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.frames < 0:
            raise ValueError("frames must be non-negative")
        if self.frame_size[0] <= 0 or self.frame_size[1] <= 0:
            raise ValueError("frame_size must be positive")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")


def visibility(agent_box: Box, occluders) -> float:
    """Fraction of ``agent_box`` not covered by the union of ``occluders``."""
    if agent_box.area <= 0:
        raise ValueError("visibility is undefined for a zero-area agent box")
    return 1.0 - covered_area(agent_box, occluders) / agent_box.area


@dataclass
class FrameTruth:
    ids: np.ndarray
    boxes: np.ndarray
    visibility: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class World:
    """Runtime view of a :class:`WorldSpec` with per-frame truth cached.

    With ``agent_occlusion`` agents also occlude each other: an agent whose
    box bottom is lower in the image (closer to the camera) hides the ones
    behind it; ties go to the larger id being in front.
    """

    spec: WorldSpec
    agent_occlusion: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def frames(self) -> int:
        return self.spec.frames

    @property
    def frame_size(self) -> tuple[float, float]:
        return self.spec.frame_size

    def truth(self, frame: int) -> FrameTruth:
        hit = self._cache.get(frame)
        if hit is not None:
            return hit
        fw, fh = self.spec.frame_size
        ids, raw = [], []
        for agent in self.spec.agents:
            b = agent.box_at(frame)
            if b is None:
                continue
            cb = clip_array(b.as_array()[None, :], fw, fh)[0]
            if cb[2] > 0 and cb[3] > 0:
                ids.append(agent.id)
                raw.append(cb)
        boxes = np.array(raw).reshape(-1, 4)
        occ = boxes_array(list(self.spec.occluders))
        vis = np.ones(len(ids))
        bottoms = boxes[:, 1] + boxes[:, 3]
        for k in range(len(ids)):
            blockers = occ
            if self.agent_occlusion and len(ids) > 1:
                front = (bottoms > bottoms[k]) | ((bottoms == bottoms[k]) & (np.array(ids) > ids[k]))
                blockers = np.concatenate([occ, boxes[front]])
            if len(blockers):
                vis[k] = 1.0 - covered_area(boxes[k], blockers) / (boxes[k, 2] * boxes[k, 3])
        out = FrameTruth(np.array(ids, dtype=int), boxes, np.clip(vis, 0.0, 1.0))
        self._cache[frame] = out
        return out


# --- presets ---------------------------------------------------------------

PRESETS = ("pole_occlusion", "crossing", "crowd")

POLE_AGENT_SIZE = (50.0, 120.0)
POLE_WIDTH = 35.0
POLE_SPEED = 0.6


def pole_occlusion() -> WorldSpec:
    """One pedestrian walking right behind a thin pole covering 70% of its width."""
    fw, fh = 960.0, 540.0
    aw, ah = POLE_AGENT_SIZE
    pole_left = 480.0
    frames = 180
    cy = 300.0
    # Centre reaches the pole-centred position at mid-sequence.
    mid = (frames - 1) / 2.0
    pole_cx = pole_left + POLE_WIDTH / 2.0
    x0 = pole_cx - POLE_SPEED * mid
    x1 = pole_cx + POLE_SPEED * ((frames - 1) - mid)
    agent = Agent(1, (aw, ah), ((0, x0, cy), (frames - 1, x1, cy)))
    return WorldSpec((fw, fh), frames, (agent,), (Box(pole_left, 0.0, POLE_WIDTH, fh),), 0)


def crossing() -> WorldSpec:
    """Two pedestrians on mirrored paths passing through each other."""
    fw, fh = 960.0, 540.0
    frames = 120
    size = (40.0, 100.0)
    cy = 300.0
    start, end = 360.0, fw - 360.0
    a = Agent(1, size, ((0, start, cy), (frames - 1, end, cy)))
    b = Agent(2, size, ((0, fw - start, cy), (frames - 1, fw - end, cy)))
    return WorldSpec((fw, fh), frames, (a, b), (), 0)


def crowd(seed: int = 0, frames: int = 200) -> WorldSpec:
    """Twelve pedestrians wandering between random waypoints, three static occluders."""
    if frames < 4:
        raise ValueError("crowd needs at least 4 frames")
    rng = np.random.default_rng([seed, 0xC0])
    fw, fh = 960.0, 540.0
    agents = []
    for k in range(12):
        h = float(rng.uniform(60.0, 160.0))
        w = round(0.4 * h, 3)
        h = round(h, 3)
        knots = [0, frames // 3, 2 * frames // 3, frames - 1]
        x = float(rng.uniform(w, fw - w))
        y = float(rng.uniform(h, fh - h / 2.0))
        waypoints = []
        for f in knots:
            waypoints.append((f, round(x, 3), round(y, 3)))
            step = 2.0 * (frames // 3)
            x = float(np.clip(x + rng.uniform(-step, step), w / 2.0, fw - w / 2.0))
            y = float(np.clip(y + rng.uniform(-step / 3.0, step / 3.0), h / 2.0, fh - h / 2.0))
        agents.append(Agent(k + 1, (w, h), tuple(waypoints)))
    occluders = []
    for _ in range(3):
        ow = round(float(rng.uniform(20.0, 60.0)), 3)
        oh = round(float(rng.uniform(150.0, fh)), 3)
        ox = round(float(rng.uniform(0.0, fw - ow)), 3)
        oy = round(float(rng.uniform(0.0, fh - oh)), 3)
        occluders.append(Box(ox, oy, ow, oh))
    return WorldSpec((fw, fh), frames, tuple(agents), tuple(occluders), seed)


def scenario_preset(name: str, seed: int = 0) -> WorldSpec:
    if name == "pole_occlusion":
        spec = pole_occlusion()
    elif name == "crossing":
        spec = crossing()
    elif name == "crowd":
        return crowd(seed)
    else:
        raise ValueError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return WorldSpec(spec.frame_size, spec.frames, spec.agents, spec.occluders, seed)
