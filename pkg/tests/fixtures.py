"""Hand-traced tracking fixture: two objects, five frames, one identity switch.

Ground truth: object 1 sits at (0, 0, 10, 10), object 2 at (100, 0, 10, 10)
in every frame. Hypotheses and the matching, frame by frame:

    frame  hypotheses                      matches (gt, hyp, IoU)          events
    1      h1 @ obj1, h2 @ obj2            (1,h1,1)   (2,h2,1)             -
    2      h1 shifted 2 px, h2 @ obj2      (1,h1,2/3) (2,h2,1)             carried over
    3      h3 @ obj1, h2 @ obj2            (1,h3,1)   (2,h2,1)             obj1 switches h1 -> h3
    4      h2 @ obj2, h9 at (300, 0)       (2,h2,1)                        obj1 missed, h9 false
    5      h3 @ obj1, h2 shifted 1 px      (1,h3,1)   (2,h2,9/11)          h3 is obj1's last match

Counters: TP 9, FN 1, FP 1, IDS 1 over 10 gt boxes, so MOTA = 0.7. Object 1
is covered 4 of 5 frames and object 2 all 5, so both are mostly tracked.
Identity: the best pairing is obj2-h2 (5 frames) plus obj1-h1 or obj1-h3
(2 frames), IDTP = 7 over 10 gt and 10 hypothesis boxes, IDF1 = 0.7.
"""

import numpy as np

from objperm.geometry import DetectionBatch

OBJ1 = [0.0, 0.0, 10.0, 10.0]
OBJ2 = [100.0, 0.0, 10.0, 10.0]

_HYP = {
    1: [(1, OBJ1), (2, OBJ2)],
    2: [(1, [2.0, 0.0, 10.0, 10.0]), (2, OBJ2)],
    3: [(3, OBJ1), (2, OBJ2)],
    4: [(2, OBJ2), (9, [300.0, 0.0, 10.0, 10.0])],
    5: [(3, OBJ1), (2, [101.0, 0.0, 10.0, 10.0])],
}

SWAP_EXPECTED = {"tp": 9, "fn": 1, "fp": 1, "ids": 1, "mt": 2, "ml": 0, "gt_count": 10, "gt_tracks": 2}
SWAP_RATES = {
    "mota": 0.7,
    "motp": (1 + 1 + 2 / 3 + 1 + 1 + 1 + 1 + 1 + 9 / 11) / 9,
    "idf1": 0.7,
    "deta": 9 / 11,
}


def swap_sequence():
    gt = {f: DetectionBatch([OBJ1, OBJ2], [1.0, 1.0], track_id=[1, 2]) for f in range(1, 6)}
    tracked = {
        f: DetectionBatch([b for _, b in rows], [0.9] * len(rows), track_id=[i for i, _ in rows])
        for f, rows in _HYP.items()
    }
    return tracked, gt


def swap_gt_rows() -> list[str]:
    return [f"{f},{i},{b[0]},{b[1]},{b[2]},{b[3]},1,1,1.0" for f in range(1, 6) for i, b in ((1, OBJ1), (2, OBJ2))]


def swap_result_rows() -> list[str]:
    return [f"{f},{i},{b[0]},{b[1]},{b[2]},{b[3]},0.9,-1,-1,-1" for f, rows in _HYP.items() for i, b in rows]


def as_arrays(batch: DetectionBatch):
    return np.asarray(batch.boxes), np.asarray(batch.track_id)
