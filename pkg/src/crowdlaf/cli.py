"""Command-line surface.

Subcommands: synth, extract, train, evaluate, compare-baselines, render,
encode. Pipeline flags mirror PipelineConfig and may also come from a flat
key=value config file; explicit flags win. Exit codes: 0 success, 2 bad
configuration, 3 bad data, 4 numeric failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from .attribute_map import (
    SceneSpec,
    apply_roi,
    default_palette,
    load_map,
    load_roi_mask,
    render_argmax,
)
from .encoder import NORM_SCHEMES, store_encoding
from .errors import ConfigError, CrowdLafError, InvalidConfig, IoFailure
from .features import GridSpec, extract_descriptors, store_descriptors
from .pipeline import (
    AUTO,
    MODES,
    PipelineConfig,
    _parse_auto,
    _parse_target,
    compare_baselines,
    evaluate,
    frame_encoding,
    load_bundle,
    load_manifest,
    parse_grid,
    save_bundle,
    synth_dataset,
    train,
    write_predictions_csv,
)

_CONFIG_KEYS = (
    "grid",
    "pyramid",
    "codebook_size",
    "knn",
    "beta",
    "pca_target",
    "lambda",
    "mode",
    "norm",
    "seed",
    "split",
    "roi",
)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--grid", help="cell grid ROWSxCOLS")
    parser.add_argument("--pyramid", help="per-cell pyramid ROWSxCOLS")
    parser.add_argument("--codebook-size", type=int, help="dictionary size K")
    parser.add_argument("--knn", type=int, help="nearest-neighbor count for soft weights")
    parser.add_argument("--beta", help="soft-assignment softness, or 'auto'")
    parser.add_argument("--pca-target", help="variance fraction in (0,1] or a fixed dimension")
    parser.add_argument("--lambda", dest="ridge_lambda", help="ridge strength, or 'auto'")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--norm", choices=NORM_SCHEMES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--split", type=int, help="first T frames train, the rest test")
    parser.add_argument("--roi", help="PGM mask applied to every frame")


def _read_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidConfig(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key == "ridge_lambda":
            key = "lambda"
        if key not in _CONFIG_KEYS:
            raise InvalidConfig(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _resolve_settings(args: argparse.Namespace) -> tuple[PipelineConfig, int | None, str | None]:
    """Merge defaults, the config file and explicit flags into a config."""
    file_values = _read_config_file(args.config) if args.config else {}
    defaults = {f.name: f.default for f in fields(PipelineConfig)}

    def pick(flag_value, key: str):
        if flag_value is not None:
            return flag_value
        return file_values.get(key)

    def parse(raw, key: str, converter):
        if raw is None:
            return defaults[key if key != "lambda" else "ridge_lambda"]
        return converter(raw) if isinstance(raw, str) else raw

    try:
        config = PipelineConfig(
            grid=parse(pick(args.grid, "grid"), "grid", parse_grid),
            pyramid=parse(pick(args.pyramid, "pyramid"), "pyramid", parse_grid),
            codebook_size=parse(pick(args.codebook_size, "codebook_size"), "codebook_size", int),
            knn=parse(pick(args.knn, "knn"), "knn", int),
            beta=parse(pick(args.beta, "beta"), "beta", _parse_auto),
            pca_target=parse(pick(args.pca_target, "pca_target"), "pca_target", _parse_target),
            ridge_lambda=parse(pick(args.ridge_lambda, "lambda"), "lambda", _parse_auto),
            mode=parse(pick(args.mode, "mode"), "mode", str),
            norm=parse(pick(args.norm, "norm"), "norm", str),
            seed=parse(pick(args.seed, "seed"), "seed", int),
        )
    except ValueError as exc:
        raise InvalidConfig(f"bad configuration value: {exc}") from exc
    split_raw = pick(args.split, "split")
    split = int(split_raw) if split_raw is not None else None
    roi = pick(args.roi, "roi")
    return config, split, roi


def _require_split(split: int | None) -> int:
    if split is None:
        raise InvalidConfig("this command needs --split (or split= in the config file)")
    return split


def _load_roi(path: str | None):
    return load_roi_mask(path) if path else None


def _parse_range(text: str, caster) -> tuple:
    parts = text.split("-")
    if len(parts) != 2:
        raise InvalidConfig(f"expected LO-HI range, got {text!r}")
    try:
        return caster(parts[0]), caster(parts[1])
    except ValueError as exc:
        raise InvalidConfig(f"bad range {text!r}") from exc


def _cmd_synth(args: argparse.Namespace) -> int:
    count_range = _parse_range(args.count_range, int)
    radius_range = _parse_range(args.radius_range, float) if args.radius_range else None
    template = SceneSpec(
        height=args.height,
        width=args.width,
        channels=args.channels,
        count=0,
        blob_radius=args.blob_radius,
        noise=args.noise,
    )
    manifest, manifest_path = synth_dataset(
        args.out,
        template,
        frames=args.frames,
        count_range=count_range,
        seed=args.seed if args.seed is not None else 0,
        split=args.split,
        radius_range=radius_range,
    )
    print(f"wrote {manifest.frames} frames and {manifest_path}")
    return 0


def _cmd_extract(args: argparse.Namespace) -> int:
    config, _, roi = _resolve_settings(args)
    amap = load_map(args.map)
    mask = _load_roi(roi)
    if mask is not None:
        amap = apply_roi(amap, mask)
    grid = GridSpec(config.grid[0], config.grid[1], config.pyramid[0], config.pyramid[1])
    descriptors = extract_descriptors(amap, grid)
    store_descriptors(descriptors, args.out)
    print(f"wrote {descriptors.count} descriptors of length {descriptors.dimension} to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config, split, roi = _resolve_settings(args)
    manifest = load_manifest(args.manifest, split=_require_split(split))
    bundle = train(manifest, config, default_roi=_load_roi(roi))
    save_bundle(bundle, args.out)
    print(f"trained {config.mode} bundle -> {args.out} (digest {bundle.digest[:12]})")
    print(f"resolved lambda={bundle.lambda_resolved!r} beta={bundle.beta_resolved!r}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config_unused, split, roi = _resolve_settings(args)
    del config_unused  # evaluation runs under the bundle's own config
    manifest = load_manifest(args.manifest, split=_require_split(split))
    bundle = load_bundle(args.bundle)
    report, rows = evaluate(manifest, bundle, default_roi=_load_roi(roi))
    if args.csv:
        write_predictions_csv(rows, args.csv)
    print(report.format_record())
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config, split, roi = _resolve_settings(args)
    manifest = load_manifest(args.manifest, split=_require_split(split))
    frames = None
    if args.frames:
        parts = args.frames.split(",")
        if len(parts) != 3:
            raise InvalidConfig("--frames expects three comma-separated indices")
        frames = tuple(int(p) for p in parts)
    comparison = compare_baselines(
        manifest, config, default_roi=_load_roi(roi), frames=frames
    )
    print(comparison.format_metrics_table())
    print()
    print(comparison.format_similarity_table())
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    amap = load_map(args.map)
    if args.palette:
        try:
            rows = Path(args.palette).read_text(encoding="utf-8").split()
        except OSError as exc:
            raise IoFailure(f"cannot read palette {args.palette}: {exc}") from exc
        values = [int(v) for v in rows]
        if len(values) % 3:
            raise InvalidConfig("palette file must hold r g b triples")
        palette = [tuple(values[i : i + 3]) for i in range(0, len(values), 3)]
    else:
        palette = default_palette(amap.channels)
    render_argmax(amap, palette, args.out)
    print(f"rendered {args.map} -> {args.out}")
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    _, _, roi = _resolve_settings(args)
    bundle = load_bundle(args.bundle)
    amap = load_map(args.map)
    mask = _load_roi(roi)
    if mask is not None:
        amap = apply_roi(amap, mask)
    encoding = frame_encoding(bundle, amap)
    store_encoding(encoding, args.out)
    print(f"wrote encoding of length {encoding.vector.size} to {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdlaf",
        description="Crowd counting over dense attribute maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset with known counts")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--count-range", required=True, help="LO-HI person counts")
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--blob-radius", type=float, default=3.0)
    p.add_argument("--radius-range", help="LO-HI per-frame blob radius jitter")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="dump grid descriptors for one map")
    p.add_argument("map")
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train a model bundle on a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="bundle output directory")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a bundle on a manifest's test split")
    p.add_argument("manifest")
    p.add_argument("--bundle", required=True)
    p.add_argument("--csv", help="write the per-frame prediction log here")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser(
        "compare-baselines", help="train and evaluate all encoder modes on one dataset"
    )
    p.add_argument("manifest")
    p.add_argument("--frames", help="similarity frames A,B,C (1-based manifest indices)")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("render", help="render the per-pixel argmax class to a PPM")
    p.add_argument("map")
    p.add_argument("--out", required=True)
    p.add_argument("--palette", help="text file of r g b triples, one class per line")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("encode", help="encode one map under a trained bundle")
    p.add_argument("map")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_encode)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except CrowdLafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
