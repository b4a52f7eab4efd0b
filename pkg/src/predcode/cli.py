"""Command-line entry point.

Subcommands: ``gen-data`` (synthetic motion benchmark), ``train``,
``eval`` (metrics + confusion reports), ``gradcheck`` (full-model
finite-difference sweep), ``inspect`` (feature-file headers). Exit codes:
0 success, 1 usage error, 2 runtime/format error. ``PREDNET_SEED`` acts as
a seed fallback when neither flags nor config set one; every subcommand
writes only beneath its ``--out`` directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .checkpoint import load_checkpoint
from .data.clipfile import load_manifest, read_feature_clip
from .data.shapes import DEFAULT_CLASSES, MovingShapesConfig, ShapeClassSpec, generate_moving_shapes
from .errors import PredcodeError, UsageError
from .evaluation import evaluate
from .gradcheck import run_gradcheck
from .model import ActionModel
from .report import emit_report, plot_training_curves
from .training import ClipDataset, fit, restore_model

GRADCHECK_TOLERANCE = 1e-4

EXTENDED_CLASSES = DEFAULT_CLASSES + (
    ShapeClassSpec("right_fast", (2, 0)),
    ShapeClassSpec("left_fast", (2, 0), reverse_of="right_fast"),
    ShapeClassSpec("down_fast", (0, 2)),
    ShapeClassSpec("up_fast", (0, 2), reverse_of="down_fast"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predcode", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate the moving-shapes benchmark")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--classes", type=int, default=4, help="number of motion classes (2..8)")
    gen.add_argument("--clips", type=int, default=200, help="training clips per class")
    gen.add_argument("--val-clips", type=int, default=50)
    gen.add_argument("--test-clips", type=int, default=50)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--canvas", type=int, default=32)
    gen.add_argument("--frames", type=int, default=90)
    gen.add_argument("--noise", type=float, default=0.0)

    train = sub.add_parser("train", help="fit a model on generated or exported data")
    train.add_argument("--config", default=None, help="TOML run config")
    train.add_argument("--profile", default="desk", choices=sorted(cfgmod.PROFILES))
    train.add_argument("--data", required=True, help="directory holding train.json and val.json")
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--resume", default=None, help="checkpoint to continue from")

    ev = sub.add_parser("eval", help="evaluate a checkpoint and emit reports")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="manifest JSON to evaluate on")
    ev.add_argument("--out", required=True)

    gc = sub.add_parser(
        "gradcheck",
        help="finite-difference sweep over every parameter of a desk-scale end-to-end model",
    )
    gc.add_argument("--profile", default="desk", choices=sorted(cfgmod.PROFILES))
    gc.add_argument("--seed", type=int, default=None)

    ins = sub.add_parser("inspect", help="print a feature file's header and stats")
    ins.add_argument("path")
    return parser


def _extract_overrides(extras: list[str]) -> list[str]:
    overrides = []
    for item in extras:
        if item.startswith("--") and "=" in item and "." in item.split("=", 1)[0]:
            overrides.append(item[2:])
        else:
            raise UsageError(f"unrecognized argument {item!r} (overrides look like --a.b=v)")
    return overrides


def _env_seed() -> int | None:
    raw = os.environ.get("PREDNET_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"PREDNET_SEED must be an integer, got {raw!r}") from exc


def _seed_for(args_seed: int | None, default: int) -> int:
    if args_seed is not None:
        return args_seed
    env = _env_seed()
    return env if env is not None else default


def cmd_gen_data(args) -> int:
    if not 2 <= args.classes <= len(EXTENDED_CLASSES):
        raise UsageError(f"--classes must be in [2, {len(EXTENDED_CLASSES)}], got {args.classes}")
    cfg = MovingShapesConfig(
        canvas=args.canvas,
        frames=args.frames,
        classes=EXTENDED_CLASSES[: args.classes],
        noise_sigma=args.noise,
        seed=_seed_for(args.seed, 7),
    )
    counts = {"train": args.clips, "val": args.val_clips, "test": args.test_clips}
    manifests = generate_moving_shapes(cfg, args.out, counts)
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest)} clips -> {Path(args.out) / (split + '.json')}")
    return 0


def cmd_train(args, extras: list[str]) -> int:
    overrides = _extract_overrides(extras)
    resolved = cfgmod.load_run_config(args.profile, args.config, overrides)
    seed = args.seed if args.seed is not None else _env_seed()
    if seed is not None:
        resolved["seed"] = seed

    data_dir = Path(args.data)
    train_manifest = load_manifest(data_dir / "train.json")
    val_path = data_dir / "val.json"
    if not val_path.exists():
        raise UsageError(f"training needs a validation manifest at {val_path}")
    val_manifest = load_manifest(val_path)

    pipeline = cfgmod.build_pipeline_config(resolved)
    train_cfg = cfgmod.build_train_config(resolved)
    model_cfg = cfgmod.build_model_config(resolved, num_classes=len(train_manifest.classes))
    model = ActionModel(model_cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved["classes"] = train_manifest.classes
    cfgmod.write_resolved_config(resolved, out_dir / "resolved.toml")

    result = fit(
        model,
        train_cfg,
        ClipDataset(train_manifest, pipeline),
        ClipDataset(val_manifest, pipeline),
        out_dir,
        config_echo=resolved,
        resume=args.resume,
    )
    for row in result.log_rows:
        print(
            f"epoch {row['epoch']:3d}  lr {row['lr']:.6g}  train {row['train_loss']:.4f}  "
            f"val {row['val_loss']:.4f}  acc {row['val_acc']:.3f}"
        )
    plot_training_curves(result.log_rows, out_dir / "training_curves.png")
    print(f"checkpoint: {result.checkpoint_path}")
    if result.best_path:
        print(f"best:       {result.best_path}")
    return 0


def cmd_eval(args) -> int:
    tensors, meta = load_checkpoint(args.checkpoint)
    echo = meta.get("config")
    if not echo or "model" not in echo:
        raise UsageError(f"{args.checkpoint}: checkpoint carries no config echo; cannot rebuild model")
    manifest = load_manifest(args.data)
    model = ActionModel(cfgmod.build_model_config(echo, num_classes=len(manifest.classes)))
    restore_model(model, tensors)
    dataset = ClipDataset(manifest, cfgmod.build_pipeline_config(echo))
    metrics = evaluate(model, dataset)
    paths = emit_report(metrics, args.out)
    print(f"top-1 {metrics.top1:.4f}  top-5 {metrics.top5:.4f}  samples {metrics.samples}")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_gradcheck(args) -> int:
    result = run_gradcheck(seed=_seed_for(args.seed, 0))
    print(f"parameters checked: {result.parameter_count}")
    print(f"worst parameter:    {result.worst()}")
    print(f"max relative error: {result.max_rel_error:.3e} ({result.seconds:.1f}s)")
    if result.max_rel_error > GRADCHECK_TOLERANCE:
        print(f"FAIL: above tolerance {GRADCHECK_TOLERANCE:g}", file=sys.stderr)
        return 2
    print(f"OK: within tolerance {GRADCHECK_TOLERANCE:g}")
    return 0


def cmd_inspect(args) -> int:
    clip = read_feature_clip(args.path)
    t, c, h, w = clip.frames.shape
    kind = "pixels" if clip.pixels else "features"
    print(f"{args.path}: {kind} T={t} C={c} H={h} W={w} label={clip.label}")
    print(
        f"values: min {clip.frames.min():.6g}  max {clip.frames.max():.6g}  "
        f"mean {clip.frames.mean():.6g}  std {clip.frames.std():.6g}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        if argv and argv[0] == "train":
            args, extras = parser.parse_known_args(argv)
        else:
            args, extras = parser.parse_args(argv), []
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "train":
            return cmd_train(args, extras)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "inspect":
            return cmd_inspect(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits 2 on bad flags; usage problems are exit 1 here
        return 0 if exc.code in (0, None) else 1
    except (PredcodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
