"""pcfv-export command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backbone import load_backbone
from .export import ExportJob, discover_classes, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcfv-export",
        description="Extract per-frame backbone features from videos into PCFV files",
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="root directory: one subdirectory per class")
    parser.add_argument("--out", dest="output_dir", required=True)
    parser.add_argument("--backbone", default="resnet50",
                        help="resnet50 (default) or stub[:channels]")
    parser.add_argument("--weights", default=None, help="local .pth for the backbone")
    parser.add_argument("--classes", default=None,
                        help="JSON file with the ordered class list; default: sorted subdirectories")
    parser.add_argument("--frames", type=int, default=90, help="frames per exported clip")
    parser.add_argument("--split", default="export", help="split tag for the manifest")
    parser.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        print(f"error: input directory {input_dir} does not exist", file=sys.stderr)
        return 1
    try:
        if args.classes:
            classes = json.loads(Path(args.classes).read_text())
            if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
                raise ValueError(f"{args.classes}: expected a JSON list of class names")
        else:
            classes = discover_classes(input_dir)
        backbone = load_backbone(args.backbone, weights=args.weights)
        if backbone.identifier.endswith(":untrained"):
            logging.warning("no --weights given: %s runs with random initialization", args.backbone)
        job = ExportJob(
            input_dir=input_dir,
            output_dir=Path(args.output_dir),
            backbone=backbone,
            classes=classes,
            frames_per_clip=args.frames,
            split=args.split,
            workers=args.workers,
        )
        summary = run_export(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"exported {summary.exported} clips ({summary.skipped} skipped) "
        f"-> {summary.manifest_path}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
