"""Command-line entry point: ``jdetrack {track,eval,simulate,bench,losses-check}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .association import DEFAULT_LAMBDA, DEFAULT_MAX_COST
from .errors import DomainError, FormatError, UsageError
from .kalman import CHI2_GATE_4DOF
from .metrics import REPORT_COLUMNS, evaluate_clear
from .tracker import TrackerConfig, tracker_run

log = logging.getLogger("jdetrack")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# flag name -> (TrackerConfig field, parser, default)
TRACK_OPTIONS = {
    "lambda": ("lam", float, DEFAULT_LAMBDA),
    "alpha": ("alpha_ema", float, 0.9),
    "confirm-frames": ("confirm_frames", int, 2),
    "max-lost": ("max_lost_frames", int, 30),
    "gate": ("gate", float, CHI2_GATE_4DOF),
    "max-cost": ("max_cost", float, DEFAULT_MAX_COST),
    "min-conf": ("min_confidence", float, 0.5),
}


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"not a boolean: {text!r}")


def build_tracker_config(args) -> TrackerConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    file_values = io.read_config(args.config) if args.config else {}
    unknown = set(file_values) - set(TRACK_OPTIONS) - {"motion-only"}
    if unknown:
        raise FormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for flag, (field_name, parse, default) in TRACK_OPTIONS.items():
        value = getattr(args, flag.replace("-", "_"))
        if value is None and flag in file_values:
            try:
                value = parse(file_values[flag])
            except ValueError as exc:
                raise FormatError(f"config key {flag}: {exc}") from None
        kwargs[field_name] = default if value is None else value
    motion_only = args.motion_only or _parse_bool(file_values.get("motion-only", "false"))
    return TrackerConfig(motion_only=motion_only, **kwargs)


def cmd_track(args) -> int:
    config = build_tracker_config(args)
    rows = io.read_mot(args.dets)
    embeddings = None
    if config.uses_appearance:
        if args.embs is None:
            raise UsageError("--embs is required unless --motion-only or --lambda 0")
        embeddings = io.read_embeddings(args.embs, expected_count=len(rows))
    frame_indices, frames = io.rows_to_detections(rows, embeddings)
    result = tracker_run(config, frames, frame_indices)
    io.write_mot(args.out, io.sequence_to_rows(result))
    log.info("wrote %d rows for %d ids to %s", len(result), len(result.ids()), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = io.rows_to_sequence(io.read_mot(args.gt))
    hyp = io.rows_to_sequence(io.read_mot(args.res))
    gt_frames, hyp_frames = set(gt.frames()), set(hyp.frames())
    if hyp_frames and gt_frames and (min(gt_frames), max(gt_frames)) != (min(hyp_frames), max(hyp_frames)):
        lo = max(min(gt_frames), min(hyp_frames))
        hi = min(max(gt_frames), max(hyp_frames))
        print(f"warning: frame ranges differ, evaluating frames {lo}..{hi}", file=sys.stderr)
        keep = range(lo, hi + 1)
        gt, hyp = gt.restrict(keep), hyp.restrict(keep)
    report = evaluate_clear(gt, hyp, args.iou)
    widths = [max(len(c), 7) for c in REPORT_COLUMNS]
    print(" ".join(c.rjust(w) for c, w in zip(REPORT_COLUMNS, widths)))
    print(" ".join(v.rjust(w) for v, w in zip(report.as_row(), widths)))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            writer.writerow(report.as_row())
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import ScenarioConfig, crossing_scenario, generate_scenario

    if args.crossing:
        scenario = crossing_scenario(n_frames=args.frames, bounce=True, seed=args.seed)
    else:
        scenario = generate_scenario(
            ScenarioConfig(
                n_frames=args.frames,
                n_targets=args.targets,
                p_miss=args.p_miss,
                fp_rate=args.fp_rate,
                box_jitter_std=args.jitter,
                embed_dim=args.embed_dim,
                embed_noise_std=args.embed_noise,
                seed=args.seed,
            )
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_mot(out / "gt.txt", io.sequence_to_rows(scenario.gt))
    io.write_mot(out / "dets.txt", io.detections_to_rows(scenario.frames))
    embs = [d.embedding for f in scenario.frames for d in f]
    io.write_embeddings(
        out / "embs.jdeb",
        np.stack(embs) if embs else np.zeros((0, scenario.config.embed_dim)),
    )
    print(f"wrote {len(scenario.gt)} gt rows, {len(embs)} detections to {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BENCH_HEADER, bench_density

    densities = [int(d) for d in args.densities.split(",") if d.strip()]
    results = []
    print(" ".join(h.rjust(10) for h in BENCH_HEADER))
    for d in densities:
        r = bench_density(d, n_frames=args.frames, seed=args.seed)
        results.append(r)
        print(" ".join(v.rjust(10) for v in r.as_row()))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BENCH_HEADER)
            writer.writerows(r.as_row() for r in results)
    return EXIT_OK


def cmd_losses_check(args) -> int:
    from .checks import GRAD_RTOL, run_loss_checks

    r = run_loss_checks(n_batches=args.batches, n_grad=args.grad_points, seed=args.seed)

    def line(name, ok, detail):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    line("upper_bound >= triplet", r.ordering_violations == 0,
         f"{r.ordering_violations}/{r.batches} violations")
    line("upper_bound >= worst single-negative triplet", r.per_negative_violations == 0,
         f"{r.per_negative_violations}/{r.batches} violations")
    line("triplet >= 0", r.nonnegative_violations == 0,
         f"{r.nonnegative_violations}/{r.batches} violations")
    line("upper_bound == softmax form", r.max_identity_gap < 1e-12, f"max gap {r.max_identity_gap:.3e}")
    for name, err in r.max_grad_error.items():
        line(f"{name} gradient", err < GRAD_RTOL, f"max relative error {err:.3e}")
    return EXIT_OK if r.ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jdetrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="associate detections into tracks")
    p.add_argument("--dets", required=True, help="MOT-format detection file")
    p.add_argument("--embs", help="JDEB embedding file, one row per detection")
    p.add_argument("--out", required=True, help="output MOT-format hypothesis file")
    p.add_argument("--config", help="key=value config file; flags take precedence")
    for flag, (_, parse, default) in TRACK_OPTIONS.items():
        p.add_argument(f"--{flag}", type=parse, default=None, help=f"default {default}")
    p.add_argument("--motion-only", action="store_true", help="lambda=0, embeddings ignored")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR-MOT and IDF1 of a result against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="write a synthetic scenario (gt, dets, embeddings)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--targets", type=int, default=5)
    p.add_argument("--p-miss", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--embed-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crossing", action="store_true", help="two targets that meet and turn back")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="association-step throughput per target density")
    p.add_argument("--densities", default="10,30,60")
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("losses-check", help="ordering, identity and gradient checks of the losses")
    p.add_argument("--batches", type=int, default=10_000)
    p.add_argument("--grad-points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_losses_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (FormatError, UsageError, DomainError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
