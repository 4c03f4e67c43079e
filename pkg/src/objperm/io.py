"""Persistence: MOT CSV files, world and run-config JSON, evaluation reports.

Readers are strict. A malformed MOT row, an unknown JSON key or a missing
referenced file raises instead of being skipped, so a corrupted input cannot
quietly bias a metric.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .config import IopConfig, KalmanConfig, ParticleConfig, RunConfig, SyntheticDetectorConfig
from .geometry import Box, DetectionBatch, as_batch
from .world import Agent, World, WorldSpec

WORLD_FORMAT = 1
CONFIG_FORMAT = 1
REPORT_SCHEMA = "objperm.eval/1"


class MotFormatError(ValueError):
    """A MOT CSV row could not be parsed; carries the file and line number."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class ConfigError(ValueError):
    """A JSON document violates its schema."""


# --- MOT CSV ---------------------------------------------------------------


@dataclass(frozen=True)
class MotRecord:
    frame: int
    id: int
    left: float
    top: float
    width: float
    height: float
    conf: float = 1.0
    cls: int = -1
    visibility: float = -1.0

    @property
    def box(self) -> Box:
        return Box(self.left, self.top, self.width, self.height)


def _number(token: str, path, line: int, name: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MotFormatError(path, line, f"{name} is not numeric: {token.strip()!r}") from None
    if not math.isfinite(value):
        raise MotFormatError(path, line, f"{name} is not finite: {token.strip()!r}")
    return value


def _integer(token: str, path, line: int, name: str) -> int:
    value = _number(token, path, line, name)
    if not value.is_integer():
        raise MotFormatError(path, line, f"{name} must be an integer, got {token.strip()!r}")
    return int(value)


def parse_mot_lines(lines: Iterable[str], path="<memory>") -> dict[int, list[MotRecord]]:
    by_frame: dict[int, list[MotRecord]] = {}
    for n, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        fields = text.split(",")
        if len(fields) < 6:
            raise MotFormatError(path, n, f"expected at least 6 fields, got {len(fields)}")
        frame = _integer(fields[0], path, n, "frame")
        if frame < 1:
            raise MotFormatError(path, n, f"frame must be >= 1, got {frame}")
        ident = _integer(fields[1], path, n, "id")
        left, top, width, height = (_number(fields[k], path, n, name) for k, name in
                                    zip(range(2, 6), ("left", "top", "width", "height")))
        if width <= 0 or height <= 0:
            raise MotFormatError(path, n, f"width and height must be positive, got {width} x {height}")
        conf = _number(fields[6], path, n, "conf") if len(fields) > 6 else 1.0
        cls = _integer(fields[7], path, n, "class") if len(fields) > 7 else -1
        vis = _number(fields[8], path, n, "visibility") if len(fields) > 8 else -1.0
        rec = MotRecord(frame, ident, left, top, width, height, conf, cls, vis)
        by_frame.setdefault(frame, []).append(rec)
    return {f: by_frame[f] for f in sorted(by_frame)}


def parse_mot(path) -> dict[int, list[MotRecord]]:
    """Read a MOTChallenge CSV (det, gt or results) grouped by 1-based frame.

    Six leading fields are required; conf, class and visibility default to
    1, -1 and -1. Further trailing fields are ignored. Blank lines are
    skipped.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mot_lines(fh, path)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_result_row(frame: int, ident: int, box, conf: float) -> str:
    left, top, width, height = box
    return f"{frame},{ident},{_fmt(left)},{_fmt(top)},{_fmt(width)},{_fmt(height)},{_fmt(conf)},-1,-1,-1"


def write_results(path, tracks: Mapping[int, Any]) -> None:
    """Write tracker output as MOT result rows, frames ascending.

    ``tracks`` maps 1-based frame numbers to id'd detections. Detections
    without an id are written with id -1.
    """
    lines = []
    for frame in sorted(tracks):
        if frame < 1:
            raise ValueError(f"MOT frames are 1-based, got {frame}")
        batch = as_batch(tracks[frame])
        for k in range(len(batch)):
            lines.append(format_result_row(frame, int(batch.track_id[k]), batch.boxes[k], batch.confidence[k]))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_mot(path, records: Mapping[int, Iterable[MotRecord]]) -> None:
    """Write full MOT rows (all nine fields) for the given records."""
    lines = []
    for frame in sorted(records):
        for r in records[frame]:
            lines.append(
                f"{r.frame},{r.id},{_fmt(r.left)},{_fmt(r.top)},{_fmt(r.width)},{_fmt(r.height)},"
                f"{_fmt(r.conf)},{r.cls},{_fmt(r.visibility)}"
            )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def world_records(world: World | WorldSpec) -> dict[int, list[MotRecord]]:
    """Ground-truth MOT records of a world: conf flag 1, class 1, visibility."""
    if isinstance(world, WorldSpec):
        world = World(world)
    out = {}
    for t in range(world.frames):
        truth = world.truth(t)
        rows = [
            MotRecord(t + 1, int(truth.ids[k]), *map(float, truth.boxes[k]), 1.0, 1, float(truth.visibility[k]))
            for k in range(len(truth))
        ]
        if rows:
            out[t + 1] = rows
    return out


def write_gt(path, world: World | WorldSpec) -> None:
    write_mot(path, world_records(world))


def records_to_batches(records: Mapping[int, Iterable[MotRecord]], ground_truth: bool = False) -> dict[int, DetectionBatch]:
    """Per-frame :class:`DetectionBatch` with ids and a single class.

    With ``ground_truth`` rows whose conf flag is 0 (marked "ignore" in the
    MOT convention) are dropped and the confidence column is set to 1.
    """
    out = {}
    for frame, rows in records.items():
        rows = [r for r in rows if not (ground_truth and r.conf == 0)]
        boxes = np.array([[r.left, r.top, r.width, r.height] for r in rows]).reshape(-1, 4)
        conf = np.ones(len(rows)) if ground_truth else np.clip([r.conf for r in rows], 0.0, 1.0)
        out[frame] = DetectionBatch(boxes, conf, track_id=np.array([r.id for r in rows], dtype=int))
    return out


# --- strict JSON <-> dataclass ---------------------------------------------


def _check_keys(data, allowed: Iterable[str], where: str, required: Iterable[str] = ()) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    allowed = set(allowed)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(map(repr, missing))}")


def _coerce(value, hint, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin in (tuple, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            items = [_coerce(v, args[0], f"{where}[{k}]") for k, v in enumerate(value)]
        elif origin is tuple:
            if len(value) != len(args):
                raise ConfigError(f"{where}: expected {len(args)} entries, got {len(value)}")
            items = [_coerce(v, a, f"{where}[{k}]") for k, (v, a) in enumerate(zip(value, args))]
        else:
            items = [_coerce(v, args[0], f"{where}[{k}]") for k, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if dataclasses.is_dataclass(hint):
        return _dataclass_from_dict(hint, value, where)
    raise TypeError(f"unsupported field type {hint!r}")


def _dataclass_from_dict(cls, data, where: str):
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(data, names, where)
    kwargs = {k: _coerce(v, hints[k], f"{where}.{k}") for k, v in data.items()}
    return cls(**kwargs)


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


# --- WorldSpec -------------------------------------------------------------


def world_to_dict(spec: WorldSpec) -> dict:
    return {
        "format": WORLD_FORMAT,
        "frame_size": list(spec.frame_size),
        "frames": spec.frames,
        "seed": spec.seed,
        "agents": [
            {"id": a.id, "size": list(a.size), "waypoints": [list(w) for w in a.waypoints]} for a in spec.agents
        ],
        "occluders": [[o.left, o.top, o.width, o.height] for o in spec.occluders],
    }


def world_from_dict(doc, where: str = "world") -> WorldSpec:
    _check_keys(doc, ("format", "frame_size", "frames", "seed", "agents", "occluders"), where,
                required=("format", "frame_size", "frames"))
    if doc["format"] != WORLD_FORMAT:
        raise ConfigError(f"{where}: unsupported format {doc['format']!r}, expected {WORLD_FORMAT}")
    frame_size = _coerce(doc["frame_size"], tuple[float, float], f"{where}.frame_size")
    frames = _coerce(doc["frames"], int, f"{where}.frames")
    seed = _coerce(doc.get("seed", 0), int, f"{where}.seed")
    agents = []
    raw_agents = doc.get("agents", [])
    if not isinstance(raw_agents, list):
        raise ConfigError(f"{where}.agents: expected a list")
    for k, a in enumerate(raw_agents):
        aw = f"{where}.agents[{k}]"
        _check_keys(a, ("id", "size", "waypoints"), aw, required=("id", "size", "waypoints"))
        waypoints = _coerce(a["waypoints"], tuple[tuple[int, float, float], ...], f"{aw}.waypoints")
        try:
            agents.append(Agent(_coerce(a["id"], int, f"{aw}.id"), _coerce(a["size"], tuple[float, float], f"{aw}.size"), waypoints))
        except ValueError as exc:
            raise ConfigError(f"{aw}: {exc}") from None
    occluders = []
    for k, o in enumerate(doc.get("occluders", [])):
        vals = _coerce(o, tuple[float, float, float, float], f"{where}.occluders[{k}]")
        try:
            occluders.append(Box(*vals))
        except ValueError as exc:
            raise ConfigError(f"{where}.occluders[{k}]: {exc}") from None
    try:
        return WorldSpec(frame_size, frames, tuple(agents), tuple(occluders), seed)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def save_world(path, spec: WorldSpec) -> None:
    _write_json(path, world_to_dict(spec))


def load_world(path) -> WorldSpec:
    return world_from_dict(_read_json(path), str(path))


# --- RunConfig -------------------------------------------------------------


def config_to_dict(cfg: RunConfig) -> dict:
    return {"format": CONFIG_FORMAT, **_to_jsonable(cfg)}


def config_from_dict(doc, where: str = "config", base_dir: Optional[os.PathLike] = None) -> RunConfig:
    """Build and validate a :class:`RunConfig`.

    Relative ``world`` and ``det_file`` paths are resolved against
    ``base_dir``; every referenced file must exist.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    body = dict(doc)
    fmt = body.pop("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        raise ConfigError(f"{where}: unsupported format {fmt!r}, expected {CONFIG_FORMAT}")
    cfg = _dataclass_from_dict(RunConfig, body, where)
    for key in ("world", "det_file"):
        value = getattr(cfg, key)
        if value is None:
            continue
        p = Path(value)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        if not p.is_file():
            raise ConfigError(f"{where}.{key}: file not found: {p}")
        setattr(cfg, key, str(p))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    return config_from_dict(_read_json(path), str(path), Path(path).parent)


def save_config(path, cfg: RunConfig) -> None:
    _write_json(path, config_to_dict(cfg))


# --- evaluation reports ----------------------------------------------------


@dataclass
class EvalReport:
    """Metrics for one or more sequences, serialisable as JSON or a text table."""

    sequences: dict[str, dict[str, float]] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema": REPORT_SCHEMA, "meta": _to_jsonable(self.meta), "sequences": _to_jsonable(self.sequences)}

    @classmethod
    def from_dict(cls, doc) -> "EvalReport":
        _check_keys(doc, ("schema", "meta", "sequences"), "report", required=("schema", "sequences"))
        if doc["schema"] != REPORT_SCHEMA:
            raise ConfigError(f"report: unsupported schema {doc['schema']!r}")
        return cls(dict(doc["sequences"]), dict(doc.get("meta", {})))

    def save(self, path) -> None:
        _write_json(path, self.to_dict())

    def table(self) -> str:
        return format_table(self.sequences)


_INT_COLUMNS = {"mt", "ml", "fp", "fn", "ids", "tp", "gt_count", "gt_tracks"}


def format_table(rows: Mapping[str, Mapping[str, Any]], first: str = "sequence") -> str:
    """Aligned plain-text table; one row per key, columns in first-seen order."""
    columns: list[str] = []
    for r in rows.values():
        for c in r:
            if c not in columns:
                columns.append(c)

    def cell(col, v):
        if v is None:
            return "-"
        if col in _INT_COLUMNS or isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return f"{v:.4f}"
        return str(v)

    header = [first, *columns]
    body = [[name, *(cell(c, r.get(c)) for c in columns)] for name, r in rows.items()]
    widths = [max(len(row[k]) for row in [header, *body]) for k in range(len(header))]
    lines = ["  ".join(h.ljust(w) if k == 0 else h.rjust(w) for k, (h, w) in enumerate(zip(row, widths)))
             for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
