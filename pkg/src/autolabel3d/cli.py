"""Command-line entry point wiring all modules into reproducible runs."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import formats, losses, metrics
from .config import NOISE_PROFILES, RunConfig, load_run_config
from .core import BACKWARD, FORWARD, InvalidArgument
from .pipeline import (coverage_report, emit_fncomp_weights,
                       merge_bidirectional, propagate, run_pipeline)
from .providers import NoiseConfig, OracleProviderSet
from .sampling import mine_pairs, sample_sparse
from .simulator import simulate

log = logging.getLogger("autolabel3d")

SEQUENCE_FILE = "sequence.txt"
SPARSE_FILE = "sparse_labels.txt"
PAIRS_FILE = "mining_pairs.txt"
PSEUDO_FILE = "pseudolabels.txt"
PSEUDO_FWD_FILE = "pseudolabels_forward.txt"
PSEUDO_BWD_FILE = "pseudolabels_backward.txt"
WEIGHTS_FILE = "weight_maps.txt"
REPORT_FILE = "metric_report.txt"
RECALL_CSV = "per_recall.csv"
COVERAGE_FILE = "coverage.txt"
SWEEP_CSV = "sweep.csv"


def _setup_logging():
    level = os.environ.get("LOGLEVEL", "warn").lower()
    mapping = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=mapping.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _read(path: Path) -> str:
    if not path.exists():
        raise InvalidArgument(f"missing input file {path}; run the producing "
                              "command first or pass --out consistently")
    return path.read_text(encoding="utf-8")


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "noise", None):
        if args.noise not in NOISE_PROFILES:
            raise InvalidArgument(f"unknown noise profile {args.noise!r}; "
                                  f"profiles: {sorted(NOISE_PROFILES)}")
        cfg = dataclasses.replace(cfg, noise=NOISE_PROFILES[args.noise])
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            sim=dataclasses.replace(cfg.sim, seed=args.seed),
            noise=dataclasses.replace(cfg.noise, seed=args.seed),
            sampling=dataclasses.replace(cfg.sampling, seed=args.seed))
    if getattr(args, "max_per_track", None) is not None:
        cfg = dataclasses.replace(
            cfg, sampling=dataclasses.replace(cfg.sampling,
                                              max_per_track=args.max_per_track))
    if getattr(args, "window", None) is not None:
        cfg = dataclasses.replace(
            cfg, sampling=dataclasses.replace(cfg.sampling, window=args.window))
    if getattr(args, "dist_threshold", None) is not None:
        cfg = dataclasses.replace(
            cfg, metrics=dataclasses.replace(cfg.metrics,
                                             dist_threshold=args.dist_threshold))
    return cfg


def _providers(seq, cfg: RunConfig) -> OracleProviderSet:
    return OracleProviderSet(seq, cfg.noise, heatmap_stride=cfg.heatmap_stride)


def cmd_simulate(args, cfg: RunConfig, out: Path):
    seq = simulate(cfg.sim)
    _write(out / SEQUENCE_FILE, formats.serialize_sequence(seq))
    print(f"simulated {len(seq.frames)} frames, "
          f"{len(seq.track_ids())} tracks -> {out / SEQUENCE_FILE}")


def cmd_sample(args, cfg: RunConfig, out: Path):
    seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
    sparse = sample_sparse(seq, cfg.sampling.max_per_track, cfg.sampling.seed)
    _write(out / SPARSE_FILE, formats.serialize_sparse_labels(sparse))
    n = sum(len(v) for v in sparse.selected.values())
    print(f"selected {n} sparse labels across {len(sparse.selected)} tracks "
          f"(reduction {sparse.reduction_ratio:.4f})")


def cmd_mine_pairs(args, cfg: RunConfig, out: Path):
    seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
    sparse = formats.parse_sparse_labels(_read(out / SPARSE_FILE))
    pairs = mine_pairs(seq, sparse, cfg.sampling.window)
    _write(out / PAIRS_FILE, formats.serialize_mining_pairs(pairs))
    by_strategy: dict[str, int] = {}
    for p in pairs:
        by_strategy[p.strategy] = by_strategy.get(p.strategy, 0) + 1
    print(f"mined {len(pairs)} pairs: {by_strategy}")


def cmd_pseudolabel(args, cfg: RunConfig, out: Path):
    seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
    sparse = formats.parse_sparse_labels(_read(out / SPARSE_FILE))
    providers = _providers(seq, cfg)
    merged, fwd, bwd = run_pipeline(seq, sparse, providers, cfg.pipeline)
    _write(out / PSEUDO_FWD_FILE, formats.serialize_pseudolabels(
        [p for h in fwd for p in h.pseudolabels]))
    _write(out / PSEUDO_BWD_FILE, formats.serialize_pseudolabels(
        [p for h in bwd for p in h.pseudolabels]))
    _write(out / PSEUDO_FILE, formats.serialize_pseudolabels(merged))
    report = coverage_report(seq, merged, fwd + bwd)
    _write(out / COVERAGE_FILE, _coverage_text(report))
    print(f"emitted {len(merged)} merged pseudolabels "
          f"(coverage {report.overall_fraction:.4f})")


def _coverage_text(report) -> str:
    lines = ["track covered total fraction mean_confidence"]
    for t in report.per_track:
        lines.append(f"{t.track_id} {t.covered} {t.total} "
                     f"{formats.fmt_float(t.fraction)} "
                     f"{formats.fmt_float(t.mean_confidence)}")
    for tid, direction, frame in report.terminations:
        lines.append(f"terminated {tid} {direction} {frame}")
    return "\n".join(lines) + "\n"


def cmd_fn_weights(args, cfg: RunConfig, out: Path):
    seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
    pseudo = formats.parse_pseudolabels(_read(out / PSEUDO_FILE))
    providers = _providers(seq, cfg)
    weights = emit_fncomp_weights(seq, pseudo, providers, cfg.pipeline)
    _write(out / WEIGHTS_FILE, formats.serialize_weight_maps(weights))
    print(f"emitted weight maps for {len(weights)} frames")


def cmd_evaluate(args, cfg: RunConfig, out: Path):
    seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
    pseudo = formats.parse_pseudolabels(_read(out / PSEUDO_FILE))
    report = metrics.evaluate(seq, pseudo, cfg.metrics.dist_threshold,
                              cfg.metrics.recall_grid)
    _write(out / REPORT_FILE, formats.serialize_metric_report(report))
    _write_recall_csv(out / RECALL_CSV, report)
    print(f"MOTA={report.mota:.6f} MOTP={report.motp:.6f} "
          f"IDF1={report.idf1:.6f} AMOTA={report.amota:.6f} "
          f"AMOTP={report.amotp:.6f}")
    print(f"counts: tp={report.counts.tp} fp={report.counts.fp} "
          f"fn={report.counts.fn} idsw={report.counts.idsw} "
          f"gt={report.counts.gt_total}")
    return report


def _write_recall_csv(path: Path, report):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["recall", "motar", "motp", "tp", "fp", "fn", "idsw",
                    "achievable"])
        for p in report.per_recall:
            w.writerow([p.recall, p.motar,
                        "" if p.motp is None else p.motp,
                        p.tp, p.fp, p.fn, p.idsw, int(p.achievable)])


def cmd_parse_kitti(args, cfg: RunConfig, out: Path):
    rows = formats.parse_kitti_labels(Path(args.labels).read_text())
    if args.calib:
        calib = formats.parse_kitti_calib(Path(args.calib).read_text())
        intrinsics = calib.intrinsics
        if calib.translation_ignored:
            log.warning("P2 carries a nonzero translation column; ignored")
    else:
        from .simulator import DEFAULT_INTRINSICS
        from .core import CameraIntrinsics
        intrinsics = CameraIntrinsics(**DEFAULT_INTRINSICS)
    seq, stats = formats.kitti_rows_to_sequence(rows, intrinsics)
    _write(out / SEQUENCE_FILE, formats.serialize_sequence(seq))
    print(f"parsed {stats.kept} annotations "
          f"(dropped {stats.dropped_dontcare} DontCare, "
          f"{stats.dropped_category} non-vehicle)")


def cmd_losses_check(args, cfg: RunConfig, out: Path):
    from .gradcheck import run_gradient_checks
    results = run_gradient_checks(seed=cfg.sampling.seed)
    print(f"{'loss':<14} {'max rel err':>12} {'points':>7} status")
    ok = True
    for name, err, n, passed in results:
        print(f"{name:<14} {err:12.3e} {n:7d} {'pass' if passed else 'FAIL'}")
        ok = ok and passed
    if not ok:
        raise InvalidArgument("gradient check failed")


def cmd_e2e(args, cfg: RunConfig, out: Path):
    cmd_simulate(args, cfg, out)
    cmd_sample(args, cfg, out)
    cmd_pseudolabel(args, cfg, out)
    cmd_fn_weights(args, cfg, out)
    report = cmd_evaluate(args, cfg, out)

    if args.sweep:
        key, _, values = args.sweep.partition("=")
        if key != "max_per_track" or not values:
            raise InvalidArgument("--sweep expects max_per_track=V1,V2,...")
        ks = [int(v) for v in values.split(",")]
        seq = formats.parse_sequence(_read(out / SEQUENCE_FILE))
        rows = []
        for k in ks:
            sparse = sample_sparse(seq, k, cfg.sampling.seed)
            providers = _providers(seq, cfg)
            merged, fwd, bwd = run_pipeline(seq, sparse, providers, cfg.pipeline)
            cov = coverage_report(seq, merged).overall_fraction
            rep = metrics.evaluate(seq, merged, cfg.metrics.dist_threshold,
                                   cfg.metrics.recall_grid)
            rows.append((k, cov, rep.mota, rep.idf1))
        with open(out / SWEEP_CSV, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["max_per_track", "coverage", "mota", "idf1"])
            w.writerows(rows)
        print("sweep: " + "; ".join(
            f"k={k}: coverage={c:.4f} MOTA={m:.4f}" for k, c, m, _ in rows))
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autolabel3d",
        description="Sparse-to-dense 3D track auto-labeling: simulate a "
                    "scene, sample sparse labels, propagate pseudolabels, "
                    "and evaluate them.")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--out", default="out", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, help="override all seeds")
        p.add_argument("--max-per-track", dest="max_per_track", type=int)
        p.add_argument("--window", type=int)
        p.add_argument("--dist-threshold", dest="dist_threshold", type=float)
        p.add_argument("--noise", help="named noise profile "
                       f"({', '.join(sorted(NOISE_PROFILES))})")
        return p

    add("simulate", cmd_simulate, "generate a synthetic sequence")
    add("sample", cmd_sample, "select the sparse label subset")
    add("mine-pairs", cmd_mine_pairs, "enumerate training mining pairs")
    add("pseudolabel", cmd_pseudolabel, "propagate and merge pseudolabels")
    add("fn-weights", cmd_fn_weights, "emit FN-compensation weight maps")
    add("evaluate", cmd_evaluate, "score pseudolabels against ground truth")
    kitti = add("parse-kitti", cmd_parse_kitti, "convert KITTI label files")
    kitti.add_argument("--labels", required=True)
    kitti.add_argument("--calib")
    add("losses-check", cmd_losses_check, "gradient-check every loss")
    e2e = add("e2e", cmd_e2e, "simulate, sample, pseudolabel, weight, evaluate")
    e2e.add_argument("--sweep", help="e.g. max_per_track=2,4,8,16")

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        args.fn(args, cfg, Path(args.out))
    except (InvalidArgument, formats.ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # internal failure
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
