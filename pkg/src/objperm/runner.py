"""Orchestration shared by the CLI and the scripts: build, run, evaluate, sweep.

Frames are 0-based inside pipelines and 1-based in everything this module
hands out (tracks, ground truth), matching the MOT files.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .config import RunConfig
from .detector import ReplayDetector, SyntheticDetector
from .geometry import DetectionBatch
from .io import load_world
from .iop import FrameTrace
from .metrics import clear_mot, det_a, idf1, voc_map
from .pipelines import pipeline_from_config, run_sequence
from .world import World, WorldSpec, scenario_preset

METRICS = ("map", "mot", "idf1", "deta")
DEFAULT_FRAME_SIZE = (1920.0, 1080.0)


def config_world(cfg: RunConfig) -> Optional[WorldSpec]:
    if cfg.preset is not None:
        return scenario_preset(cfg.preset, cfg.seed)
    if cfg.world is not None:
        return load_world(cfg.world)
    return None


def build_detector(cfg: RunConfig):
    """Detector for a validated config. External detectors must be closed by the caller."""
    frame_size = cfg.frame_size or DEFAULT_FRAME_SIZE
    if cfg.detector == "synthetic":
        return SyntheticDetector(config_world(cfg), cfg.synthetic, cfg.seed)
    if cfg.detector == "replay":
        return ReplayDetector.from_file(cfg.det_file, frame_size)
    from .external import ExternalDetector

    return ExternalDetector.spawn(cfg.external_command, cfg.det_file, frame_size, cfg.external_timeout)


def world_ground_truth(world: World | WorldSpec) -> dict[int, DetectionBatch]:
    if isinstance(world, WorldSpec):
        world = World(world)
    out = {}
    for t in range(world.frames):
        truth = world.truth(t)
        out[t + 1] = DetectionBatch(truth.boxes, np.ones(len(truth)), track_id=truth.ids)
    return out


def tracks_of(traces: Iterable[FrameTrace]) -> dict[int, DetectionBatch]:
    return {tr.frame + 1: tr.emitted for tr in traces}


def run_config(cfg: RunConfig, detector=None) -> list[FrameTrace]:
    det = build_detector(cfg) if detector is None else detector
    try:
        return run_sequence(pipeline_from_config(cfg, det))
    finally:
        if detector is None and hasattr(det, "close"):
            det.close()


def evaluate(
    tracks: Mapping,
    ground_truth: Mapping,
    metrics: Sequence[str] = METRICS,
    iou_thr: float = 0.5,
    motp_distance: bool = False,
) -> dict:
    """Flat metric dict for one sequence."""
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"unknown metric(s) {', '.join(unknown)}; expected a subset of {', '.join(METRICS)}")
    out: dict = {}
    if "map" in metrics:
        out["map"] = voc_map(tracks, ground_truth, iou_thr).map
    if "mot" in metrics:
        rep = clear_mot(tracks, ground_truth, iou_thr, motp_distance)
        for key in ("mota", "motp", "mt", "ml", "fp", "fn", "ids"):
            out[key] = getattr(rep, key)
    if "idf1" in metrics:
        out["idf1"] = idf1(tracks, ground_truth, iou_thr)
    if "deta" in metrics:
        out["deta"] = det_a(tracks, ground_truth, iou_thr)
    return out


def trace_to_dict(trace: FrameTrace) -> dict:
    return {
        "frame": trace.frame,
        "proposals": [list(r) for r in trace.proposals.rows()],
        "refined": [list(r[:5]) for r in trace.refined.rows()],
        "emitted": [
            [*map(float, trace.emitted.boxes[k]), float(trace.emitted.confidence[k]), int(trace.emitted.track_id[k])]
            for k in range(len(trace.emitted))
        ],
        "feedback": trace.feedback,
    }


# --- sweeps ----------------------------------------------------------------


@dataclass
class SweepCell:
    particles: int
    history: int
    per_seed: list[dict]

    def summary(self) -> dict:
        keys = self.per_seed[0].keys() if self.per_seed else ()
        out = {"particles": self.particles, "history": self.history, "seeds": len(self.per_seed)}
        for k in keys:
            vals = np.array([s[k] for s in self.per_seed], dtype=float)
            out[k] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
        return out


def sweep(
    base: RunConfig,
    particles: Sequence[int],
    history: Sequence[int],
    seeds: Sequence[int],
    metrics: Sequence[str] = METRICS,
) -> list[SweepCell]:
    """Run the ``particles x history`` grid on every seed of a synthetic preset."""
    if base.detector != "synthetic":
        raise ValueError("sweeps run on synthetic worlds only")
    cells = []
    for p, h in itertools.product(particles, history):
        rows = []
        for s in seeds:
            cfg = replace(
                base,
                seed=int(s),
                iop=replace(base.iop, particles=int(p), history=int(h)),
                pf=replace(base.pf, capacity=int(p)),
            )
            cfg.validate()
            det = build_detector(cfg)
            traces = run_config(cfg, det)
            rows.append(evaluate(tracks_of(traces), world_ground_truth(det.world), metrics))
        cells.append(SweepCell(int(p), int(h), rows))
    return cells


def sweep_matrix(cells: Sequence[SweepCell], metric: str = "map") -> dict:
    """``particles x history`` mean and sd matrices for one metric."""
    ps = sorted({c.particles for c in cells})
    hs = sorted({c.history for c in cells})
    mean = np.full((len(ps), len(hs)), np.nan)
    sd = np.full((len(ps), len(hs)), np.nan)
    for c in cells:
        s = c.summary()[metric]
        mean[ps.index(c.particles), hs.index(c.history)] = s["mean"]
        sd[ps.index(c.particles), hs.index(c.history)] = s["sd"]
    return {"metric": metric, "particles": ps, "history": hs, "mean": mean.tolist(), "sd": sd.tolist()}


def parse_grid_values(text: str) -> list[int]:
    """``"50,75,100"`` or ``"1..19"`` (inclusive) or a mix like ``"1..3,5"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ValueError(f"empty entry in grid {text!r}")
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return out
