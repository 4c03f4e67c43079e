"""Tracking metrics of the filters and IOP variants on one scenario.

One row per pipeline (and per history length for the history variant),
metrics averaged over seeds. Usage::

    python scripts/tracking_table.py --preset crowd --history 1,5,10,19 --seeds 5
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from objperm.config import IopConfig
from objperm.detector import SyntheticDetector
from objperm.io import format_table
from objperm.pipelines import make_pipeline, run_sequence
from objperm.runner import evaluate, parse_grid_values, tracks_of, world_ground_truth
from objperm.world import PRESETS, scenario_preset

COLUMNS = ("mota", "motp", "idf1", "mt", "ml", "fp", "fn", "ids", "deta")
INTEGER = {"mt", "ml", "fp", "fn", "ids"}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", default="crowd", choices=PRESETS)
    parser.add_argument("--pipelines", default="plain,kf,pf,iop-lite,iop-particles")
    parser.add_argument("--history", default="1,5,10,19", help="history lengths for iop-history rows")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--out")
    args = parser.parse_args(argv)

    variants = [(n, IopConfig()) for n in args.pipelines.split(",") if n]
    variants += [(f"iop-history N={h}", replace(IopConfig(), history=h)) for h in parse_grid_values(args.history)]
    rows = {}
    for label, iop in variants:
        name = label.split(" ")[0]
        per_seed = []
        for seed in range(args.seeds):
            det = SyntheticDetector(scenario_preset(args.preset, seed), seed=seed)
            traces = run_sequence(make_pipeline(name, det, iop, seed=seed))
            per_seed.append(evaluate(tracks_of(traces), world_ground_truth(det.world), ["mot", "idf1", "deta"]))
        rows[label] = {c: float(np.mean([s[c] for s in per_seed])) for c in COLUMNS}
    table = {k: {c: (round(v[c]) if c in INTEGER else v[c]) for c in COLUMNS} for k, v in rows.items()}
    sys.stdout.write(format_table(table, "pipeline"))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"preset": args.preset, "seeds": args.seeds, "rows": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
