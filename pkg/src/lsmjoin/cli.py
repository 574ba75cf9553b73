"""Command-line entry point: ``lsmjoin generate|run|predict|compare``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

from .bench import (
    ExperimentConfig,
    compare,
    emit_report,
    load_report,
    predict,
    run_experiment,
)
from .workload import dump_csv, generate, load_csv


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.workload = dataclasses.replace(cfg.workload, seed=args.seed)
    if getattr(args, "methods", None):
        cfg.methods = args.methods
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _out_dir(cfg: ExperimentConfig) -> str:
    out = cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    stream_r, stream_s, truth = generate(cfg.workload)
    dump_csv(stream_r, os.path.join(out, "R.csv"))
    dump_csv(stream_s, os.path.join(out, "S.csv"))
    with open(os.path.join(out, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(truth), fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(stream_r)} R and {len(stream_s)} S updates to {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    streams = None
    if args.r_csv or args.s_csv:
        if not (args.r_csv and args.s_csv):
            raise SystemExit("--r-csv and --s-csv must be given together")
        streams = (load_csv(args.r_csv, "R"), load_csv(args.s_csv, "S"))
    rows = run_experiment(cfg, streams)
    emit_report(rows, "csv", os.path.join(out, "report.csv"))
    emit_report(rows, "json", os.path.join(out, "report.json"))
    result = compare({r.method: r.join_io for r in rows}, {r.method: r.predicted_io for r in rows})
    for r in rows:
        print(f"{r.method:28s} build_io={r.build_io:<10d} join_io={r.join_io:<10d} "
              f"predicted={r.predicted_io:<12.1f} rows={r.rows}")
    print(f"spearman_rho={result['spearman_rho']:.3f} over {result['methods']} methods")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    preds = predict(cfg)
    terms = sorted({t for _, j, _ in preds for t in j.breakdown})
    path = os.path.join(out, "predict.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "predicted_io", "predicted_build_io", *terms])
        for m, join, build in preds:
            w.writerow([m.id, join.io_units, build.io_units, *(join.breakdown.get(t, 0.0) for t in terms)])
    print(f"wrote {len(preds)} predictions to {path}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    rows = load_report(args.report)
    measured = {r.method: float(r.join_io) for r in rows}
    if args.predictions:
        with open(args.predictions, newline="", encoding="utf-8") as fh:
            predicted = {d["method"]: float(d["predicted_io"]) for d in csv.DictReader(fh)}
    else:
        predicted = {r.method: r.predicted_io for r in rows}
    result = compare(measured, predicted)
    text = json.dumps(result, indent=2, default=float)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmjoin", description="Join methods over LSM-trees: benchmark and cost model.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, methods: bool = True) -> None:
        p.add_argument("--config", help="experiment config JSON (keys mirror ExperimentConfig fields)")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, help="override the workload seed")
        if methods:
            p.add_argument("--methods", help="'all' or a comma-separated list such as HJ-P,SJ-PS/S-Comp/cov")

    p = sub.add_parser("generate", help="write R.csv, S.csv and ground_truth.json")
    common(p, methods=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="build tables, run joins, write report.csv and report.json")
    common(p)
    p.add_argument("--r-csv", help="load R updates from CSV instead of generating")
    p.add_argument("--s-csv", help="load S updates from CSV instead of generating")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("predict", help="write model predictions to predict.csv without touching storage")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="rank-correlate a report against predictions")
    p.add_argument("--report", required=True, help="report.csv or report.json from 'run'")
    p.add_argument("--predictions", help="predict.csv; defaults to the report's own predicted_io")
    p.add_argument("--out", help="directory for compare.json")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"lsmjoin: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
