"""mAP of each pipeline relative to plain inference, per scenario.

Rows are scenario presets, columns are pipelines; each cell is the mean
mAP gain over plain inference across seeds, with the sd of the per-seed
gains. Usage::

    python scripts/gain_table.py --seeds 10 --out gains.json
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from objperm.config import IopConfig, ParticleConfig
from objperm.detector import SyntheticDetector
from objperm.io import format_table
from objperm.pipelines import make_pipeline, run_sequence
from objperm.runner import evaluate, tracks_of, world_ground_truth
from objperm.world import PRESETS, scenario_preset


def column_pipelines(particles):
    cols = {"iop-lite": ("iop-lite", 0), "kf": ("kf", 0)}
    for p in particles:
        cols[f"particles={p}"] = ("iop-particles", p)
    return cols


def seed_map(name, particles, spec, seed):
    det = SyntheticDetector(spec, seed=seed)
    pipe = make_pipeline(name, det, replace(IopConfig(), particles=particles), replace(ParticleConfig(), capacity=max(particles, 1)), seed=seed)
    return evaluate(tracks_of(run_sequence(pipe)), world_ground_truth(det.world), ["map"])["map"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--presets", default=",".join(PRESETS))
    parser.add_argument("--particles", default="50,75,100,200")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--out")
    args = parser.parse_args(argv)

    presets = args.presets.split(",")
    cols = column_pipelines([int(p) for p in args.particles.split(",")])
    rows, doc = {}, {}
    for preset in presets:
        plain = []
        gains = {c: [] for c in cols}
        for seed in range(args.seeds):
            spec = scenario_preset(preset, seed)
            base = seed_map("plain", 0, spec, seed)
            plain.append(base)
            for col, (name, p) in cols.items():
                gains[col].append(seed_map(name, p, spec, seed) - base)
        doc[preset] = {"plain": float(np.mean(plain)), **{c: {"mean": float(np.mean(g)), "sd": float(np.std(g, ddof=1)) if len(g) > 1 else 0.0} for c, g in gains.items()}}
        rows[preset] = {"plain": f"{np.mean(plain):.4f}", **{c: f"{v['mean']:+.4f}±{v['sd']:.4f}" for c, v in doc[preset].items() if c != "plain"}}
    sys.stdout.write(format_table(rows, "scenario"))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"seeds": args.seeds, "gains": doc}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
