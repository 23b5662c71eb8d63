"""Command line: export images to DAFM attribute maps.

    dafm-export export --model torchvision:fcn_resnet50 \
        --classes voc_to_4.txt --out maps/ frame001.png frame002.png
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .classmap import load_merge_table
from .errors import ExporterError
from .export import ExportJob, export
from .models import load_model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dafm-export",
        description="Export per-pixel segmentation probabilities as DAFM maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert images to attribute maps")
    p.add_argument("images", nargs="+")
    p.add_argument("--model", required=True, help="torchvision:<name>[?weights=none] or torchscript:<path>")
    p.add_argument("--classes", required=True, help="merge table file: 'source -> target' lines")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--inference-size", type=int, help="cap on the longer side during inference")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        model = load_model(args.model)
        job = ExportJob(
            images=tuple(args.images),
            model=args.model,
            merge_table=load_merge_table(args.classes),
            out_dir=args.out,
            inference_size=args.inference_size,
        )
        written = export(job, model)
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
