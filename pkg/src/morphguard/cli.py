"""Command-line driver for the desk-scale experiments.

Subcommands mirror the experiment recipes: `gen-data`, `train`,
`sweep-margins`, `adapt`, `eval`, `analyze-features`, and
`print-default-config`. Every command resolves one ExperimentConfig
(JSON file plus optional --seed override), writes a manifest recording
it, and emits only deterministic bytes, so re-running a command with
the same config and inputs reproduces its output files exactly.

Exit codes: 0 success, 2 config error, 3 data/protocol error,
4 numeric error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datagen, featviz, metrics
from .encoder import load_checkpoint, save_checkpoint, train
from .errors import ConfigError, DataError, MorphGuardError, NumericError
from .experiment import (
    ExperimentConfig,
    evaluate_from_files,
    feature_analysis,
    fresh_model,
    generate_bundle,
    run_adaptation,
    run_sweep,
    train_config,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def load_config(args) -> ExperimentConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        config = ExperimentConfig.from_dict(raw)
    else:
        config = ExperimentConfig()
    if args.seed is not None:
        raw = config.to_dict()
        raw["seed"] = args.seed
        config = ExperimentConfig.from_dict(raw)
    return config


def write_manifest(out_dir: Path, command: str, config: ExperimentConfig):
    payload = {"command": command, "config": config.to_dict(), "seed": config.seed}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_history_csv(path: Path, histories):
    """histories: list of (stage label, TrainHistory)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("stage,epoch,mean_loss,lr\n")
        for label, history in histories:
            for epoch, (loss, lr) in enumerate(zip(history.epoch_mean_loss, history.epoch_lr)):
                fh.write(f"{label},{epoch},{loss!r},{lr!r}\n")


def write_report_files(out_dir: Path, report, prefix: str = ""):
    metrics.save_curve_csv(report.fnmr_curve, out_dir / f"{prefix}fnmr.csv")
    metrics.save_curve_csv(report.fmr_curve, out_dir / f"{prefix}fmr.csv")
    metrics.save_curve_csv(report.mmpmr_curve, out_dir / f"{prefix}mmpmr.csv")
    metrics.save_operating_points_csv(report.operating_points, out_dir / f"{prefix}operating_points.csv")
    metrics.save_scores_csv(report.verification, out_dir / f"{prefix}scores.csv")
    metrics.save_trials_json(report.trials, out_dir / f"{prefix}trials.json")


def _point_fields(point):
    return [
        "" if point.target is None else repr(float(point.target)),
        "" if point.achieved is None else repr(float(point.achieved)),
        "" if point.threshold is None else repr(float(point.threshold)),
        repr(float(point.value)),
    ]


def cmd_gen_data(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = generate_bundle(config)
    datagen.save_dataset(bundle.bona_fides, out_dir / "bona_fides.jsonl")
    datagen.save_dataset(bundle.train_set, out_dir / "dataset.jsonl")
    datagen.save_protocol(bundle.protocol, bundle.universe, out_dir / "protocol.json")
    write_manifest(out_dir, "gen-data", config)
    print(
        f"wrote {len(bundle.bona_fides)} bona fides, {len(bundle.train_set)} training samples, "
        f"{len(bundle.protocol.pairs)} protocol pairs to {out_dir}"
    )
    return 0


def cmd_train(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = generate_bundle(config)
    model = fresh_model(config)
    model, history = train(model, bundle.train_set, train_config(config))
    save_checkpoint(model, out_dir / "checkpoint.bin")
    write_history_csv(out_dir / "history.csv", [("initial", history)])
    write_manifest(out_dir, "train", config)
    print(f"trained {config.train.epochs} epochs, final mean loss {history.epoch_mean_loss[-1]:.4f}")
    return 0


def cmd_sweep_margins(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_sweep(config, parallel=args.parallel)
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("margin,metric,target,achieved,threshold,value\n")
        for offset, _, report in results:
            for point in report.operating_points:
                fh.write(",".join([repr(float(offset)), point.metric, *_point_fields(point)]) + "\n")
    for offset, history, report in results:
        sub = out_dir / f"margin_{offset:+.3f}"
        sub.mkdir(exist_ok=True)
        write_report_files(sub, report)
        write_history_csv(sub / "history.csv", [("sweep", history)])
    write_manifest(out_dir, "sweep-margins", config)
    print(f"swept {len(results)} margin offsets; summary at {out_dir / 'summary.csv'}")
    return 0


def cmd_adapt(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pretrained = load_checkpoint(args.checkpoint) if args.checkpoint else None
    stage1, stage2 = run_adaptation(config, pretrained)
    model1, history1, report1 = stage1
    model2, history2, report2 = stage2
    if history1 is not None:
        save_checkpoint(model1, out_dir / "stage1_checkpoint.bin")
    save_checkpoint(model2, out_dir / "stage2_checkpoint.bin")
    histories = ([("initial", history1)] if history1 is not None else []) + [("adaptation", history2)]
    write_history_csv(out_dir / "history.csv", histories)
    with open(out_dir / "stage_metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("stage,metric,target,achieved,threshold,value\n")
        for stage, report in (("stage1", report1), ("stage2", report2)):
            for point in report.operating_points:
                fh.write(",".join([stage, point.metric, *_point_fields(point)]) + "\n")
    write_report_files(out_dir, report1, prefix="stage1_")
    write_report_files(out_dir, report2, prefix="stage2_")
    write_manifest(out_dir, "adapt", config)
    print(
        f"stage1 min-RMMR {report1.min_rmmr_value:.4f} -> stage2 {report2.min_rmmr_value:.4f}; "
        f"reports at {out_dir}"
    )
    return 0


def _load_eval_inputs(args, config):
    model = load_checkpoint(args.checkpoint)
    bona_fides = datagen.load_dataset(args.data)
    protocol = datagen.load_protocol(args.protocol)
    if bona_fides and bona_fides[0].input.shape[0] != model.input_dim:
        raise DataError(
            f"checkpoint expects input dim {model.input_dim} but data has "
            f"{bona_fides[0].input.shape[0]}"
        )
    expected = config.data.num_classes * config.data.samples_per_class
    if len(bona_fides) != expected:
        raise DataError(
            f"bona fide pool holds {len(bona_fides)} samples but the config implies {expected}"
        )
    return model, bona_fides, protocol


def cmd_eval(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, bona_fides, protocol = _load_eval_inputs(args, config)
    report = evaluate_from_files(model, bona_fides, protocol, config)
    write_report_files(out_dir, report)
    write_manifest(out_dir, "eval", config)
    print(
        f"evaluated {len(report.trials)} morph trials; min-RMMR {report.min_rmmr_value:.4f} "
        f"at threshold {report.min_rmmr_threshold:.4f}"
    )
    return 0


def cmd_analyze_features(args) -> int:
    config = load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, bona_fides, protocol = _load_eval_inputs(args, config)
    aligned, ellipse, size = feature_analysis(model, bona_fides, protocol, config)
    featviz.save_aligned_csv(aligned, out_dir / "aligned_points.csv")
    featviz.save_ellipse_csv(ellipse, out_dir / "ellipse.csv")
    featviz.render_svg(aligned, ellipse, out_dir / "features.svg")
    write_manifest(out_dir, "analyze-features", config)
    print(f"analyzed {len(aligned)} triplets; ellipse size {size:.4f}")
    return 0


def cmd_print_default_config(args) -> int:
    print(json.dumps(ExperimentConfig().to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphguard",
        description="Dual-branch margin-loss training lab: data generation, margin sweeps, "
        "two-stage adaptation, robustness evaluation, and feature analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="experiment config JSON (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="emit dataset, protocol, and manifest files")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model from the config and save a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-margins", help="train and evaluate one model per margin offset")
    common(p)
    p.add_argument("--parallel", action="store_true", help="run sweep entries in parallel")
    p.set_defaults(func=cmd_sweep_margins)

    p = sub.add_parser("adapt", help="two-stage run: bona fide pretraining, then morph adaptation")
    common(p)
    p.add_argument("--checkpoint", help="stage-1 checkpoint to adapt (stage 1 is trained if omitted)")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a checkpoint on saved data and protocol files")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="bona fide pool (JSONL from gen-data)")
    p.add_argument("--protocol", required=True, help="pairing protocol JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-features", help="aligned feature clouds, ellipse report, and SVG")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", required=True)
    p.set_defaults(func=cmd_analyze_features)

    p = sub.add_parser("print-default-config", help="write the default config JSON to stdout")
    p.set_defaults(func=cmd_print_default_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data/protocol error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MorphGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
