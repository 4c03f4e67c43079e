"""``objperm`` command line: simulate, run, eval, sweep and bench.

Logs go to stderr. Exit status is 0 only if the requested artifact was
written; configuration and input errors exit with 2, detector protocol
errors with 3.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import bench_latency
from .config import PIPELINES, IopConfig, ParticleConfig, RunConfig
from .detector import SyntheticDetector
from .io import (
    ConfigError,
    EvalReport,
    MotFormatError,
    format_table,
    load_config,
    parse_mot,
    records_to_batches,
    save_world,
    write_gt,
    write_results,
)
from .metrics import MetricInputError
from .pipelines import make_pipeline
from .runner import (
    METRICS,
    build_detector,
    evaluate,
    parse_grid_values,
    run_config,
    sweep,
    sweep_matrix,
    trace_to_dict,
    tracks_of,
)
from .world import PRESETS, crowd, scenario_preset

log = logging.getLogger("objperm")

EXIT_INPUT = 2
EXIT_PROTOCOL = 3


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def cmd_simulate(args) -> int:
    spec = scenario_preset(args.preset, args.seed)
    save_world(args.out, spec)
    log.info("wrote world %s (%d agents, %d frames)", args.out, len(spec.agents), spec.frames)
    if args.gt:
        write_gt(args.gt, spec)
        log.info("wrote ground truth %s", args.gt)
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    det = build_detector(cfg)
    try:
        traces = run_config(cfg, det)
    finally:
        if hasattr(det, "close"):
            det.close()
    write_results(args.out, tracks_of(traces))
    log.info("%s: %d frames -> %s", cfg.pipeline, len(traces), args.out)
    if args.trace:
        _write_json(args.trace, {"schema": "objperm.trace/1", "pipeline": cfg.pipeline, "seed": cfg.seed,
                                 "frames": [trace_to_dict(t) for t in traces]})
    return 0


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    gt = records_to_batches(parse_mot(args.gt), ground_truth=True)
    results = records_to_batches(parse_mot(args.results))
    values = evaluate(results, gt, metrics, args.iou, args.motp_distance)
    name = Path(args.results).stem
    meta = {"results": str(args.results), "gt": str(args.gt), "iou_thr": args.iou, "motp_distance": args.motp_distance}
    report = EvalReport({name: values}, meta)
    report.save(args.out)
    sys.stdout.write(report.table())
    return 0


def cmd_sweep(args) -> int:
    grid = {"particles": [ParticleConfig().capacity], "history": [1]}
    for item in args.grid:
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} must look like name=values")
        key, values = item.split("=", 1)
        if key not in grid:
            raise ConfigError(f"unknown grid axis {key!r}; expected particles or history")
        grid[key] = parse_grid_values(values)
    base = RunConfig(pipeline=args.pipeline, preset=args.preset)
    base.validate()
    seeds = list(range(args.seed, args.seed + args.seeds))
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    cells = sweep(base, grid["particles"], grid["history"], seeds, metrics)
    doc = {
        "schema": "objperm.sweep/1",
        "preset": args.preset,
        "pipeline": args.pipeline,
        "seeds": seeds,
        "cells": [c.summary() for c in cells],
        "matrix": {m: sweep_matrix(cells, m) for m in ("map", "mota", "idf1") if m in cells[0].per_seed[0]},
    }
    _write_json(args.out, doc)
    if "map" in doc["matrix"]:
        mat = doc["matrix"]["map"]
        rows = {
            f"particles={p}": {
                f"h={h}": f"{mat['mean'][i][j]:.4f}±{mat['sd'][i][j]:.4f}" for j, h in enumerate(mat["history"])
            }
            for i, p in enumerate(mat["particles"])
        }
        sys.stdout.write(format_table(rows, "mAP"))
    return 0


def cmd_bench(args) -> int:
    names = [n.strip() for n in args.pipelines.split(",") if n.strip()]
    for n in names:
        if n not in PIPELINES:
            raise ConfigError(f"unknown pipeline {n!r}")
    if "plain" not in names:
        names = ["plain", *names]
    spec = crowd(args.seed, max(args.frames, 4)) if args.preset == "crowd" else scenario_preset(args.preset, args.seed)
    det = SyntheticDetector(spec, seed=args.seed)
    for t in range(min(args.frames, det.frames)):
        det.world.truth(t)  # precompute ground truth outside the timed region
    iop = replace(IopConfig(), particles=args.particles)
    pf = replace(ParticleConfig(), capacity=args.particles)
    factories = {n: (lambda d, n=n: make_pipeline(n, d, iop, pf, seed=args.seed)) for n in names}
    report = bench_latency(factories, det, args.frames, args.reps)
    _write_json(args.out, report.to_dict())
    rows = {
        n: {"mean_ms": t.mean_ms, "overhead_ms": t.overhead_ms, "non_detector_ms": t.non_detector_ms, "samples": t.samples}
        for n, t in report.pipelines.items()
    }
    sys.stdout.write(format_table(rows, "pipeline"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objperm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a scenario world and optional MOT ground truth")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--gt")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run a configured pipeline and write MOT results")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score MOT results against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--motp-distance", action="store_true", help="report MOTP as mean 1 - IoU")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="particles x history grid over seeds")
    p.add_argument("--grid", nargs="+", default=["particles=50,75,100,200"])
    p.add_argument("--preset", default="crowd", choices=PRESETS)
    p.add_argument("--pipeline", default="iop-particles", choices=("iop-particles", "iop-history"))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="per-frame latency overhead versus the plain pipeline")
    p.add_argument("--pipelines", default="plain,kf,pf,iop-lite,iop-particles")
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--particles", type=int, default=200)
    p.add_argument("--preset", default="crowd", choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    from .external import ProtocolError

    try:
        return args.func(args)
    except ProtocolError as exc:
        log.error("detector protocol error: %s", exc)
        return EXIT_PROTOCOL
    except (ConfigError, MotFormatError, MetricInputError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
