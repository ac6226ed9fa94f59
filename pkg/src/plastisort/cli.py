"""``plastisort`` command-line entry point.

Exit codes: 0 success, 1 invalid input (usage, config, data, weight file,
missing input file), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .harness.classify import boxes_csv, classify, detections_csv
from .harness.config import ConfigError, TrainConfig, dump_config, load_config
from .harness.dataset import DatasetError, read_listing, write_listing
from .harness.evaluation import evaluate
from .harness.sweep import AXES, sweep
from .harness.training import listing_for, report_rows, train
from .imgio import ImageFormatError, load_image, save_image, to_grayscale
from .nncore.network import ShapeError
from .nncore.weightfile import WeightFileError, load_weights, save_weights
from .preprocess import blur_metric, load_stats, prepare_crop, save_stats
from .segment import extract_crops, segment_image
from .synthgen import SynthSpec, generate_dataset

log = logging.getLogger("plastisort")

SEED_ENV = "PLASTISORT_SEED"
DEFAULT_CLASSES = ("ABS", "PS")
# a missing input path is the caller's mistake, other OS errors are runtime failures
VALIDATION_ERRORS = (ConfigError, DatasetError, ImageFormatError, ShapeError, WeightFileError,
                     FileNotFoundError)  # fmt: skip


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required=False):
    p.add_argument("--config", type=Path, help="INI config file (lowest precedence)")
    p.add_argument("--seed", type=int, help=f"master seed (falls back to ${SEED_ENV})")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, repeatable (highest precedence)")  # fmt: skip
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plastisort", description="Black plastic segmentation and classification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate the synthetic two-class dataset")
    _common(p, out_required=True)
    p.add_argument("--per-class", type=int, default=SynthSpec.images_per_class)
    p.add_argument("--trays", type=int, default=SynthSpec.trays)

    p = sub.add_parser("segment", help="cut a tray photo into per-piece crops")
    _common(p, out_required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--min-area", type=int, help="minimum component area (default 0.1%% of image)")

    p = sub.add_parser("preprocess", help="crop -> CLAHE/pad/resize image for audit")
    _common(p, out_required=True)
    p.add_argument("--image", type=Path, required=True)

    p = sub.add_parser("train", help="train a network")
    _common(p, out_required=True)
    p.add_argument("--data", help="dataset root (overrides data.root)")

    p = sub.add_parser("sweep", help="run one of the experiment tables")
    _common(p, out_required=True)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--data", help="dataset root (overrides data.root)")

    p = sub.add_parser("eval", help="evaluate weights on a split")
    _common(p)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--role", choices=("val", "test"), default="test")
    p.add_argument("--data", help="dataset root (overrides data.root)")

    p = sub.add_parser("classify", help="segment and classify a tray photo")
    _common(p)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    return parser


def resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"${SEED_ENV} is not an integer: {env!r}") from None
    return None


def resolve_config(args, near: Path | None = None) -> TrainConfig:
    """Defaults < config file (or the one saved next to ``near``) < env seed < flags."""
    path = args.config
    if path is None and near is not None and (near / "config.ini").exists():
        path = near / "config.ini"
    cfg = load_config(path, args.overrides)
    seed = resolve_seed(args)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if getattr(args, "data", None):
        cfg = replace(cfg, data=replace(cfg.data, root=args.data))
    return cfg


def _write_snapshot(out: Path, cfg: TrainConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))


def _model_from(weights_path: Path, cfg: TrainConfig):
    """Spec, weights and class names for a trained model."""
    sidecar = weights_path.with_suffix(".stats")
    classes = DEFAULT_CLASSES
    if sidecar.exists():
        _, meta = load_stats(sidecar)
        if "classes" in meta:
            classes = tuple(meta["classes"].split(","))
        if "network" in meta and not cfg.layers:
            cfg = replace(cfg, network=meta["network"])
    spec = cfg.network_spec(len(classes))
    weights = load_weights(weights_path, spec)
    if weights.stats is None:
        raise WeightFileError(f"{weights_path}: no input statistics stored")
    return spec, weights, classes, cfg


def cmd_gen(args) -> int:
    seed = resolve_seed(args) or 0
    spec = SynthSpec(images_per_class=args.per_class, trays=args.trays, seed=seed)
    generate_dataset(spec, args.out)
    lines = ["[synth]"] + [f"{k} = {v}" for k, v in asdict(spec).items()]
    (args.out / "synth.ini").write_text("\n".join(lines) + "\n")
    print(f"wrote {2 * spec.images_per_class} pieces and {spec.trays} trays to {args.out}")
    return 0


def cmd_segment(args) -> int:
    cfg = resolve_config(args)
    img = load_image(args.image)
    seg = segment_image(img, min_area=args.min_area)
    _write_snapshot(args.out, cfg)
    for box, crop in zip(seg.boxes, extract_crops(img, seg.boxes, cfg.crop_pad)):
        save_image(crop, args.out / f"crop_{box.label:03d}.{'pgm' if crop.channels == 1 else 'ppm'}")
    (args.out / "boxes.csv").write_text(boxes_csv(seg.boxes))
    print(f"threshold {seg.threshold.threshold}; {len(seg.boxes)} pieces")
    return 0


def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    spec = cfg.network_spec()
    img = load_image(args.image)
    out = prepare_crop(img, cfg.preprocess_params(spec.input_size))
    _write_snapshot(args.out, cfg)
    save_image(out, args.out / (args.image.stem + "_prepared.pgm"))
    gray = to_grayscale(img)
    if gray.width >= 3 and gray.height >= 3:
        print(f"blur metric {blur_metric(gray):.3f}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    listing = listing_for(cfg)
    _write_snapshot(args.out, cfg)
    write_listing(listing, args.out / "splits.csv")
    weights, report = train(cfg, listing)
    save_weights(weights, args.out / "weights.psnn")
    spec = cfg.network_spec(len(listing.classes))
    save_stats(args.out / "weights.stats", weights.stats, network=spec.name,
               classes=",".join(listing.classes))  # fmt: skip
    with open(args.out / "train_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "iteration", "loss", "val_accuracy"])
        w.writerows(report_rows(report))
    summary = (
        f"seed = {report.seed}\nn_train = {report.n_train}\nn_val = {report.n_val}\n"
        f"iterations = {report.iterations}\nskipped_blurry = {report.skipped_blurry}\n"
        f"final_val_accuracy = {report.final_val_accuracy:.4f}\n"
    )
    (args.out / "summary.txt").write_text(summary)
    log.info("wall time %.1f s", report.wall_time)
    print(f"final validation accuracy {report.final_val_accuracy:.2f}%")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    _write_snapshot(args.out, cfg)
    report = sweep(args.axis, cfg, runs=args.runs, jobs=args.jobs)
    stem = args.out / f"sweep_{args.axis}"
    stem.with_suffix(".csv").write_text(report.to_csv())
    stem.with_suffix(".txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args, near=args.weights.parent)
    spec, weights, _classes, cfg = _model_from(args.weights, cfg)
    pinned = args.weights.parent / "splits.csv"
    if pinned.exists() and cfg.data.root:
        listing = read_listing(cfg.data.root, pinned)
    else:
        listing = listing_for(cfg)
    report = evaluate(weights, listing, args.role, spec, cfg.preprocess_params(spec.input_size))
    text = report.to_text() + "\n"
    if args.out:
        _write_snapshot(args.out, cfg)
        (args.out / f"eval_{args.role}.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_classify(args) -> int:
    cfg = resolve_config(args, near=args.weights.parent)
    spec, weights, classes, cfg = _model_from(args.weights, cfg)
    tray = load_image(args.image)
    dets = classify(spec, weights, tray, cfg.preprocess_params(spec.input_size),
                    crop_pad=cfg.crop_pad, jobs=args.jobs)  # fmt: skip
    text = detections_csv(dets, classes)
    if args.out:
        _write_snapshot(args.out, cfg)
        (args.out / "detections.csv").write_text(text)
    print(text, end="")
    if not dets:
        print("warning: no pieces found", file=sys.stderr)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "segment": cmd_segment,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "classify": cmd_classify,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report, never traceback by default
        if args.verbose > 1:
            raise
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
