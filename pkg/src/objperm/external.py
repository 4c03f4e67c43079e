"""Second stage served by an external process over newline-delimited JSON.

Each request is one line ``{"frame": t, "proposals": [[l, t, w, h, obj], ...]}``
written to the process's stdin; the process answers with exactly one line
``{"detections": [[l, t, w, h, conf], ...]}`` holding one detection per
proposal, in order. Proposals come from a replay file, so the external
process only has to implement scoring and box refinement.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from typing import IO, Optional, Sequence

import numpy as np

from .detector import ProposalBatch, ReplayDetector, as_proposals
from .geometry import DetectionBatch


class ProtocolError(RuntimeError):
    """The external detector timed out, exited or sent a malformed response."""


class NdjsonChannel:
    """Request/response over a pair of byte streams with a per-reply timeout."""

    def __init__(self, writer: IO[bytes], reader: IO[bytes], timeout: float = 10.0):
        self.writer = writer
        self.timeout = timeout
        self._lines: "queue.Queue[Optional[bytes]]" = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(reader,), daemon=True)
        self._thread.start()

    def _pump(self, reader) -> None:
        try:
            for line in iter(reader.readline, b""):
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def request(self, payload: dict) -> dict:
        try:
            self.writer.write(json.dumps(payload, allow_nan=False).encode() + b"\n")
            self.writer.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"cannot write request: {exc}") from None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(f"no response within {self.timeout} s") from None
        if line is None:
            raise ProtocolError("external detector closed its output")
        try:
            doc = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ProtocolError("response must be a JSON object")
        return doc


def encode_request(frame: int, proposals: ProposalBatch) -> dict:
    return {"frame": int(frame), "proposals": [list(r) for r in proposals.rows()]}


def decode_response(doc: dict, expected: int) -> DetectionBatch:
    if set(doc) != {"detections"}:
        raise ProtocolError(f"response must have exactly the key 'detections', got {sorted(doc)}")
    rows = doc["detections"]
    if not isinstance(rows, list):
        raise ProtocolError("'detections' must be a list")
    if len(rows) != expected:
        raise ProtocolError(f"expected {expected} detections (one per proposal), got {len(rows)}")
    values = []
    for k, row in enumerate(rows):
        ok = (
            isinstance(row, list)
            and len(row) == 5
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in row)
        )
        if not ok:
            raise ProtocolError(f"detection {k} must be 5 finite numbers, got {row!r}")
        if row[2] < 0 or row[3] < 0 or not 0.0 <= row[4] <= 1.0:
            raise ProtocolError(f"detection {k} has negative extent or confidence outside [0, 1]: {row!r}")
        values.append(row)
    arr = np.array(values, dtype=float).reshape(-1, 5)
    return DetectionBatch(arr[:, :4], arr[:, 4])


class ExternalDetector:
    """Replay proposals plus an external second stage."""

    def __init__(self, proposals: ReplayDetector, channel: NdjsonChannel, process: Optional[subprocess.Popen] = None):
        self.proposals = proposals
        self.channel = channel
        self.process = process

    @classmethod
    def spawn(cls, command: Sequence[str], det_file, frame_size, timeout: float = 10.0) -> "ExternalDetector":
        proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        channel = NdjsonChannel(proc.stdin, proc.stdout, timeout)
        return cls(ReplayDetector.from_file(det_file, frame_size), channel, proc)

    @property
    def frame_size(self):
        return self.proposals.frame_size

    @property
    def frames(self) -> int:
        return self.proposals.frames

    def propose(self, frame: int) -> ProposalBatch:
        return self.proposals.propose(frame)

    def refine(self, frame: int, proposals) -> DetectionBatch:
        props = as_proposals(proposals)
        doc = self.channel.request(encode_request(frame, props))
        return decode_response(doc, len(props))

    def close(self) -> None:
        if self.process is None:
            return
        try:
            self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()
        self.process = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
