"""Command-line entry point: generate, stats, adapt, evaluate, sweep."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .assets import AssetError, load_library
from .config import ConfigError, load_config
from .dataset_io.adapt import adapt_external_dataset
from .dataset_io.coco import DatasetError, load_json
from .dataset_io.stats import compute_dataset_stats, write_stats
from .metrics.coco_eval import evaluate
from .metrics.io import (UnknownImageError, load_pair, to_box_mode, write_curve_csv, write_key_value_csv,
                         write_report_json, write_table_csv)
from .metrics.pdq import pdq_counts, threshold_sweep
from .pipeline import generate_dataset

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2
EXIT_ASSETS = 3
EXIT_UNKNOWN_IMAGE = 4

log = logging.getLogger("handforge")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _threads(text: str) -> int:
    v = _count(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _step(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("step must lie in (0, 1]")
    return v


def _score(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError("score must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="handforge", description="Synthetic RGB-D hand datasets and evaluation.")
    p.add_argument("--version", action="version", version=f"handforge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a domain-randomized dataset")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--seed", type=_u64, default=0)
    g.add_argument("--frames", type=_count, default=1000)
    g.add_argument("--threads", type=_threads, default=1)

    s = sub.add_parser("stats", help="recompute statistics for a dataset directory")
    s.add_argument("dataset", help="dataset directory containing annotations.json")
    s.add_argument("--out", help="where to write the CSV and heatmap (default: the dataset)")
    s.add_argument("--config", help="accepted for symmetry; unused")

    a = sub.add_parser("adapt", help="convert a normalized external dataset")
    a.add_argument("input", help="normalized input directory")
    a.add_argument("--out", required=True)
    a.add_argument("--config", help="JSON config with an 'adapter' section")

    for name, helptext in (("evaluate", "AP/AR and PDQ at one score threshold"),
                           ("sweep", "PDQ and AP over a confidence-threshold sweep")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("gt", help="COCO ground-truth JSON")
        e.add_argument("detections", help="detection result JSON")
        e.add_argument("--out", required=True)
        e.add_argument("--geometry", choices=("mask", "box"), default="mask" if name == "evaluate" else "box")
        e.add_argument("--threads", type=_threads, default=1)
        e.add_argument("--percent", action="store_true", help="report AP/AR as percentages (PDQ stays a fraction)")
        if name == "evaluate":
            e.add_argument("--score-min", type=_score, default=0.1)
        else:
            e.add_argument("--step", type=_step, default=0.025)
    return p


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    lib = load_library(cfg.assets, cfg.base_dir)
    meta = generate_dataset(args.out, args.seed, args.frames, cfg.policy, lib, cfg.camera, args.threads,
                            asset_manifest=cfg.assets)
    print(f"generated {args.frames} frames into {args.out} ({len(meta['gaps'])} gaps)")
    return EXIT_OK if not meta["gaps"] else EXIT_DATA


def cmd_stats(args) -> int:
    coco = load_json(Path(args.dataset) / "annotations.json")
    stats = compute_dataset_stats(coco)
    paths = write_stats(stats, _out_dir(args.out or args.dataset))
    print(f"instances per image: {dict(sorted(stats.instance_count_histogram.items()))}")
    print(f"centroid heatmap coverage: {stats.heatmap_coverage():.3f}")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = load_config(args.config)
    _, coco, report = adapt_external_dataset(args.input, cfg.adapter, _out_dir(args.out))
    print(f"adapted {len(coco['images'])} frames, {len(coco['annotations'])} annotations")
    if report["unknown_labels"]:
        print(f"warning: {report['warning_count']} unknown label occurrences skipped: {report['unknown_labels']}")
    return EXIT_OK


def _load_eval_inputs(args):
    gts, dets, ids = load_pair(args.gt, args.detections)
    if args.geometry == "box":
        dets = to_box_mode(dets)
    return gts, dets, ids


AP_KEYS = ("ap_5095", "ap_50", "ap_small", "ap_medium", "ap_large", "ar_5095", "AP_at_PDQ_max", "AP_max")


def _present(report: dict, percent: bool) -> dict:
    if not percent:
        return report
    return {k: (v * 100.0 if k in AP_KEYS and v is not None else v) for k, v in report.items()}


def cmd_evaluate(args) -> int:
    gts, dets, ids = _load_eval_inputs(args)
    ap = evaluate(dets, gts, args.score_min, args.geometry, image_ids=ids)
    kept = [d for d in dets if d.score >= args.score_min]
    pdq = pdq_counts(kept, gts, args.geometry, ids, args.threads)
    report = {**ap.to_dict(), "pdq": pdq.pdq, "pdq_tp": pdq.tp, "pdq_fp": pdq.fp, "pdq_fn": pdq.fn,
              "score_min": args.score_min, "geometry": args.geometry, "percent": args.percent,
              "images": len(ids), "ground_truths": len(gts), "detections": len(kept)}
    report = _present(report, args.percent)
    out = _out_dir(args.out)
    write_report_json(report, out / "eval_report.json")
    write_key_value_csv(report, out / "eval_report.csv")
    print(f"AP@0.5:0.95={_fmt(ap.ap_5095)} AP@0.5={_fmt(ap.ap_50)} AR={_fmt(ap.ar_5095)} PDQ={pdq.pdq:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    gts, dets, ids = _load_eval_inputs(args)
    rep = threshold_sweep(dets, gts, args.step, args.geometry, ids, args.threads)
    out = _out_dir(args.out)
    write_report_json({**rep.to_dict(), "step": args.step, "geometry": args.geometry}, out / "sweep_report.json")
    write_curve_csv(rep.curve, out / "sweep_curve.csv")
    write_table_csv(rep.table_row(), out / "sweep_table.csv")
    print(f"PDQ_max={rep.pdq_max:.4f} threshold={rep.threshold_at_max:.3f} "
          f"AP_at_PDQ_max={_fmt(rep.ap_at_max)} AP_max={_fmt(rep.ap_max)}")
    return EXIT_OK


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.4f}"


COMMANDS = {"generate": cmd_generate, "stats": cmd_stats, "adapt": cmd_adapt,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except AssetError as exc:
        print(f"asset error: {exc}", file=sys.stderr)
        return EXIT_ASSETS
    except UnknownImageError as exc:
        print(f"unknown image_id: {' '.join(str(i) for i in exc.image_ids)}", file=sys.stderr)
        return EXIT_UNKNOWN_IMAGE
    except (DatasetError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
