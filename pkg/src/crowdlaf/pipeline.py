"""End-to-end orchestration: dataset manifests, pipeline configuration,
training, evaluation, baseline comparison and model persistence.

A trained model is a self-describing bundle (config digest, whitening,
codebook, regressor, resolved auto-parameters) whose arrays are quantized
to float32 at train time, so saving and reloading a bundle reproduces
bit-identical predictions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attribute_map import (
    AttributeMap,
    RoiMask,
    SceneSpec,
    apply_roi,
    load_map,
    load_roi_mask,
    store_map,
    synth_scene,
)
from .codebook import (
    Codebook,
    WhiteningTransform,
    fit_codebook,
    fit_whitening,
    project,
    squared_distances,
)
from .encoder import (
    FULL,
    NORM_SCHEMES,
    Encoding,
    assign_hard,
    encode,
    normalize_encoding,
    similarity,
    soft_assignments,
)
from .errors import (
    DimensionMismatch,
    EmptyTestSplit,
    InconsistentDims,
    InvalidConfig,
    InvalidManifest,
    InvalidSpec,
    IoFailure,
    MalformedHeader,
)
from .features import DescriptorSet, GridSpec, extract_descriptors, holistic_feature, pyramid_feature
from .regression import (
    MetricsReport,
    RegressionModel,
    fit_regressor,
    predict,
    rounded_count,
    score,
)

BUNDLE_VERSION = 1
MODES = ("hf", "sppf", "lfv", "wvlad")
AUTO = "auto"

# candidate ridge strengths for the auto-lambda cross-validation
LAMBDA_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_LAMBDA = 1e-3


def parse_grid(text: str) -> tuple[int, int]:
    """Parse an 'RxC' grid shape."""
    parts = text.lower().split("x")
    try:
        rows, cols = (int(p) for p in parts)
    except ValueError as exc:
        raise InvalidConfig(f"expected ROWSxCOLS, got {text!r}") from exc
    return rows, cols


def format_grid(shape: tuple[int, int]) -> str:
    return f"{shape[0]}x{shape[1]}"


def _format_auto(value: float | str) -> str:
    return AUTO if value == AUTO else repr(float(value))


def _parse_auto(text: str) -> float | str:
    return AUTO if text == AUTO else float(text)


def _format_target(value: float | int) -> str:
    return str(int(value)) if isinstance(value, (int, np.integer)) else repr(float(value))


def _parse_target(text: str) -> float | int:
    return float(text) if any(c in text for c in ".eE") else int(text)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to reproduce a training run."""

    grid: tuple[int, int] = (20, 20)
    pyramid: tuple[int, int] = (2, 2)
    codebook_size: int = 100
    knn: int = 10
    beta: float | str = AUTO
    pca_target: float | int = 0.95
    ridge_lambda: float | str = AUTO
    mode: str = "wvlad"
    norm: str = "intra+global"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        object.__setattr__(self, "pyramid", tuple(int(v) for v in self.pyramid))
        for name in ("grid", "pyramid"):
            shape = getattr(self, name)
            if len(shape) != 2 or min(shape) < 1:
                raise InvalidConfig(f"{name} must be two positive counts, got {shape}")
        if self.codebook_size < 1:
            raise InvalidConfig("codebook size must be >= 1")
        if not 1 <= self.knn <= self.codebook_size:
            raise InvalidConfig(
                f"knn must lie in [1, codebook_size={self.codebook_size}], got {self.knn}"
            )
        if self.beta != AUTO and not (
            isinstance(self.beta, (int, float)) and float(self.beta) >= 0.0
        ):
            raise InvalidConfig(f"beta must be 'auto' or a non-negative number, got {self.beta!r}")
        if self.ridge_lambda != AUTO and not (
            isinstance(self.ridge_lambda, (int, float)) and float(self.ridge_lambda) >= 0.0
        ):
            raise InvalidConfig(
                f"lambda must be 'auto' or a non-negative number, got {self.ridge_lambda!r}"
            )
        if isinstance(self.pca_target, bool) or not isinstance(
            self.pca_target, (int, float, np.integer, np.floating)
        ):
            raise InvalidConfig(f"pca target must be a fraction or a dimension, got {self.pca_target!r}")
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.norm not in NORM_SCHEMES:
            raise InvalidConfig(f"norm must be one of {NORM_SCHEMES}, got {self.norm!r}")

    def meta_items(self) -> list[tuple[str, str]]:
        return [
            ("mode", self.mode),
            ("grid", format_grid(self.grid)),
            ("pyramid", format_grid(self.pyramid)),
            ("codebook_size", str(self.codebook_size)),
            ("knn", str(self.knn)),
            ("beta", _format_auto(self.beta)),
            ("pca_target", _format_target(self.pca_target)),
            ("lambda", _format_auto(self.ridge_lambda)),
            ("norm", self.norm),
            ("seed", str(self.seed)),
        ]

    def digest(self) -> str:
        canonical = ";".join(f"{k}={v}" for k, v in self.meta_items())
        return hashlib.sha256(canonical.encode("ascii")).hexdigest()

    @staticmethod
    def from_meta(meta: dict[str, str]) -> "PipelineConfig":
        return PipelineConfig(
            grid=parse_grid(meta["grid"]),
            pyramid=parse_grid(meta["pyramid"]),
            codebook_size=int(meta["codebook_size"]),
            knn=int(meta["knn"]),
            beta=_parse_auto(meta["beta"]),
            pca_target=_parse_target(meta["pca_target"]),
            ridge_lambda=_parse_auto(meta["lambda"]),
            mode=meta["mode"],
            norm=meta["norm"],
            seed=int(meta["seed"]),
        )


@dataclass(frozen=True)
class FrameEntry:
    """One manifest line: map path, ground-truth count, optional ROI path."""

    map_path: str
    count: int
    roi_path: str | None = None

    def line(self) -> str:
        if self.roi_path is None:
            return f"{self.map_path},{self.count}"
        return f"{self.map_path},{self.count},{self.roi_path}"


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered frames plus an optional train/test split boundary.

    The first `split` frames train, the rest test. Paths are resolved
    relative to `root` (the manifest file's directory).
    """

    entries: tuple[FrameEntry, ...]
    root: Path
    split: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "root", Path(self.root))
        if not self.entries:
            raise InvalidManifest("manifest lists no frames")
        if any(e.count < 0 for e in self.entries):
            raise InvalidManifest("ground-truth counts must be non-negative")
        if self.split is not None and not 1 <= self.split < len(self.entries):
            raise InvalidManifest(
                f"split must satisfy 1 <= T < {len(self.entries)}, got {self.split}"
            )

    @property
    def frames(self) -> int:
        return len(self.entries)

    def with_split(self, split: int) -> "DatasetManifest":
        return replace(self, split=split)

    def _require_split(self) -> int:
        if self.split is None:
            raise InvalidManifest("manifest has no train/test split assigned")
        return self.split

    def train_entries(self) -> tuple[FrameEntry, ...]:
        return self.entries[: self._require_split()]

    def test_entries(self) -> tuple[FrameEntry, ...]:
        return self.entries[self._require_split() :]

    def resolve(self, path: str) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.root / candidate


def load_manifest(path: str | Path, split: int | None = None) -> DatasetManifest:
    """Read a manifest file (one `map,count[,roi]` line per frame).

    All referenced files must exist; writing the result back with
    write_manifest reproduces a canonical file byte-for-byte.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    entries: list[FrameEntry] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) not in (2, 3):
            raise InvalidManifest(f"{path}:{lineno}: expected map,count[,roi]")
        try:
            count = int(fields[1])
        except ValueError as exc:
            raise InvalidManifest(f"{path}:{lineno}: bad count {fields[1]!r}") from exc
        roi = fields[2] if len(fields) == 3 else None
        entries.append(FrameEntry(map_path=fields[0], count=count, roi_path=roi))
    manifest = DatasetManifest(entries=tuple(entries), root=path.parent, split=split)
    for entry in manifest.entries:
        if not manifest.resolve(entry.map_path).is_file():
            raise IoFailure(f"manifest references missing map {entry.map_path}")
        if entry.roi_path is not None and not manifest.resolve(entry.roi_path).is_file():
            raise IoFailure(f"manifest references missing ROI {entry.roi_path}")
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    text = "".join(entry.line() + "\n" for entry in manifest.entries)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc


def synth_dataset(
    out_dir: str | Path,
    template: SceneSpec,
    frames: int,
    count_range: tuple[int, int],
    seed: int = 0,
    split: int | None = None,
    radius_range: tuple[float, float] | None = None,
    manifest_name: str = "manifest.txt",
) -> tuple[DatasetManifest, Path]:
    """Write a synthetic dataset (maps plus manifest) under `out_dir`.

    Per-frame counts are drawn uniformly from `count_range`; everything is
    deterministic in `seed`. An optional `radius_range` jitters the blob
    radius per frame, which decouples the total person mass from the count
    and makes the task genuinely hard for holistic features.
    """
    lo, hi = count_range
    if frames < 1:
        raise InvalidSpec("need at least one frame")
    if lo < 0 or hi < lo:
        raise InvalidSpec(f"count range [{lo}, {hi}] is empty or negative")
    if radius_range is not None and not 0.0 < radius_range[0] <= radius_range[1]:
        raise InvalidSpec(f"radius range {radius_range} is empty or non-positive")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create dataset directory {out}: {exc}") from exc
    rng = np.random.default_rng(seed)
    entries: list[FrameEntry] = []
    for index in range(1, frames + 1):
        count = int(rng.integers(lo, hi + 1))
        radius = (
            template.blob_radius
            if radius_range is None
            else float(rng.uniform(radius_range[0], radius_range[1]))
        )
        frame_seed = int(rng.integers(0, 2**63 - 1))
        amap, truth = synth_scene(
            replace(template, count=count, blob_radius=radius, seed=frame_seed)
        )
        name = f"frame_{index:05d}.dafm"
        store_map(amap, out / name)
        entries.append(FrameEntry(map_path=name, count=truth))
    manifest = DatasetManifest(entries=tuple(entries), root=out, split=split)
    manifest_path = out / manifest_name
    write_manifest(manifest, manifest_path)
    return manifest, manifest_path


@dataclass(frozen=True)
class ModelBundle:
    """Persisted model: config digest, fitted components, resolved parameters."""

    version: int
    config: PipelineConfig
    channels: int
    regressor: RegressionModel
    lambda_resolved: float
    whitening: WhiteningTransform | None = None
    codebook: Codebook | None = None
    beta_resolved: float | None = None

    def __post_init__(self) -> None:
        cfg = self.config
        subcells = cfg.pyramid[0] * cfg.pyramid[1]
        if self.channels < 1:
            raise InconsistentDims("bundle channel count must be >= 1")
        if cfg.mode == "hf":
            expected = self.channels
        elif cfg.mode == "sppf":
            expected = subcells * self.channels
        else:
            if self.whitening is None or self.codebook is None:
                raise InconsistentDims(f"{cfg.mode} bundles need whitening and a codebook")
            if self.whitening.input_dim != subcells * self.channels:
                raise InconsistentDims(
                    f"whitening expects dim {self.whitening.input_dim}, descriptors "
                    f"have dim {subcells * self.channels}"
                )
            if self.codebook.dim != self.whitening.output_dim:
                raise InconsistentDims("codebook dim must equal whitening output dim")
            if self.codebook.size != cfg.codebook_size:
                raise InconsistentDims("codebook size differs from the configured size")
            if cfg.mode == "wvlad" and self.beta_resolved is None:
                raise InconsistentDims("wvlad bundles need a resolved beta")
            expected = self.codebook.size * self.codebook.dim
        if self.regressor.dim != expected:
            raise InconsistentDims(
                f"regressor expects dim {self.regressor.dim}, pipeline produces {expected}"
            )

    @property
    def digest(self) -> str:
        return self.config.digest()


def resolve_beta(
    projected: np.ndarray, codebook: Codebook | np.ndarray, kappa: int
) -> float:
    """Default soft-assignment softness for a training sample.

    One over the mean squared distance from each descriptor to its kappa
    nearest centroids; degenerate all-zero distances fall back to 1.
    """
    centers = codebook.centroids if isinstance(codebook, Codebook) else codebook
    d2 = squared_distances(np.asarray(projected, dtype=np.float64), centers)
    k = min(int(kappa), d2.shape[1])
    nearest = np.partition(d2, k - 1, axis=1)[:, :k]
    mean = float(nearest.mean())
    return 1.0 / mean if mean > 0.0 else 1.0


def resolve_lambda(
    features: np.ndarray, targets: np.ndarray, seed: int, folds: int = 5
) -> float:
    """Pick the ridge strength by cross-validated MAE over a fixed grid."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        return DEFAULT_LAMBDA
    k = min(folds, n // 2)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[np.random.default_rng(seed).permutation(n)] = np.arange(n) % k
    best_lam = DEFAULT_LAMBDA
    best_err = np.inf
    for lam in LAMBDA_GRID:
        errors = []
        for fold in range(k):
            held = fold_of == fold
            model = fit_regressor(x[~held], y[~held], lam)
            preds = x[held] @ model.weights + model.intercept
            errors.append(float(np.abs(preds - y[held]).mean()))
        cv = float(np.mean(errors))
        if cv < best_err - 1e-12:
            best_err, best_lam = cv, lam
    return float(best_lam)


def _quantize_whitening(transform: WhiteningTransform) -> WhiteningTransform:
    return WhiteningTransform(
        mean=transform.mean.astype(np.float32),
        projection=transform.projection.astype(np.float32),
        eigenvalues=transform.eigenvalues.astype(np.float32),
        eps=transform.eps,
        target=transform.target,
    )


def _quantize_codebook(codebook: Codebook) -> Codebook:
    return Codebook(
        centroids=codebook.centroids.astype(np.float32),
        objective=codebook.objective,
        seed=codebook.seed,
        history=codebook.history,
    )


def _frame_map(
    manifest: DatasetManifest, entry: FrameEntry, default_roi: RoiMask | None
) -> AttributeMap:
    amap = load_map(manifest.resolve(entry.map_path))
    roi = default_roi
    if entry.roi_path is not None:
        roi = load_roi_mask(manifest.resolve(entry.roi_path))
    return apply_roi(amap, roi) if roi is not None else amap


def _grid_spec(config: PipelineConfig) -> GridSpec:
    return GridSpec(config.grid[0], config.grid[1], config.pyramid[0], config.pyramid[1])


def _laf_encoding(
    descriptors: DescriptorSet,
    whitening: WhiteningTransform,
    codebook: Codebook,
    config: PipelineConfig,
    beta: float | None,
    digest: str,
) -> Encoding:
    xs = project(whitening, descriptors.vectors)
    if config.mode == "lfv":
        weights = assign_hard(xs, codebook)
    else:
        weights = soft_assignments(xs, codebook, config.knn, beta)
    raw = encode(
        xs, codebook, weights, zero_mask=descriptors.zero_mask, config_digest=digest
    )
    return normalize_encoding(raw, config.norm)


def frame_encoding(bundle: ModelBundle, amap: AttributeMap) -> Encoding:
    """Fully normalized representation of one frame under a trained bundle."""
    if amap.channels != bundle.channels:
        raise DimensionMismatch(
            f"bundle was trained on {bundle.channels} channels, map has {amap.channels}"
        )
    cfg = bundle.config
    if cfg.mode == "hf":
        return Encoding(holistic_feature(amap), state=FULL, blocks=1, config_digest=bundle.digest)
    if cfg.mode == "sppf":
        return Encoding(
            pyramid_feature(amap, cfg.pyramid), state=FULL, blocks=1, config_digest=bundle.digest
        )
    descriptors = extract_descriptors(amap, _grid_spec(cfg))
    return _laf_encoding(
        descriptors, bundle.whitening, bundle.codebook, cfg, bundle.beta_resolved, bundle.digest
    )


def frame_vector(bundle: ModelBundle, amap: AttributeMap) -> np.ndarray:
    return frame_encoding(bundle, amap).vector


def train(
    manifest: DatasetManifest,
    config: PipelineConfig,
    default_roi: RoiMask | None = None,
) -> ModelBundle:
    """Fit a bundle on the manifest's training split.

    Whitening, codebook, beta and lambda are all resolved on training frames
    only; fitted arrays are quantized to float32 before the regressor sees
    the encodings, so saved bundles predict bit-identically.
    """
    entries = manifest.train_entries()
    counts = np.array([entry.count for entry in entries], dtype=np.float64)
    digest = config.digest()

    channels: int | None = None
    whitening: WhiteningTransform | None = None
    codebook: Codebook | None = None
    beta: float | None = None

    if config.mode in ("hf", "sppf"):
        rows = []
        for entry in entries:
            amap = _frame_map(manifest, entry, default_roi)
            if channels is None:
                channels = amap.channels
            elif amap.channels != channels:
                raise InconsistentDims("training frames disagree on channel count")
            if config.mode == "hf":
                rows.append(holistic_feature(amap))
            else:
                rows.append(pyramid_feature(amap, config.pyramid))
        features = np.vstack(rows)
    else:
        grid = _grid_spec(config)
        sets: list[DescriptorSet] = []
        for entry in entries:
            amap = _frame_map(manifest, entry, default_roi)
            if channels is None:
                channels = amap.channels
            elif amap.channels != channels:
                raise InconsistentDims("training frames disagree on channel count")
            sets.append(extract_descriptors(amap, grid))
        pooled = np.vstack([s.vectors[~s.zero_mask] for s in sets])
        whitening = _quantize_whitening(fit_whitening(pooled, config.pca_target))
        projected = project(whitening, pooled)
        codebook = _quantize_codebook(
            fit_codebook(projected, config.codebook_size, seed=config.seed)
        )
        if config.mode == "wvlad":
            beta = (
                resolve_beta(projected, codebook, config.knn)
                if config.beta == AUTO
                else float(config.beta)
            )
        features = np.vstack(
            [
                _laf_encoding(s, whitening, codebook, config, beta, digest).vector
                for s in sets
            ]
        )

    lam = (
        resolve_lambda(features, counts, config.seed)
        if config.ridge_lambda == AUTO
        else float(config.ridge_lambda)
    )
    model = fit_regressor(features, counts, lam)
    model = RegressionModel(
        weights=model.weights.astype(np.float32),
        intercept=model.intercept,
        ridge_lambda=model.ridge_lambda,
    )
    return ModelBundle(
        version=BUNDLE_VERSION,
        config=config,
        channels=channels,
        regressor=model,
        lambda_resolved=lam,
        whitening=whitening,
        codebook=codebook,
        beta_resolved=beta,
    )


@dataclass(frozen=True)
class PredictionRow:
    """One evaluated frame: 1-based manifest index, truth, raw and rounded."""

    index: int
    truth: int
    raw: float
    rounded: int


def evaluate(
    manifest: DatasetManifest,
    bundle: ModelBundle,
    default_roi: RoiMask | None = None,
) -> tuple[MetricsReport, list[PredictionRow]]:
    """Predict on the manifest's test split and score against ground truth.

    Metrics use the raw predictions; the rounded non-negative counts ride
    along in the per-frame log.
    """
    tests = manifest.test_entries()
    if not tests:
        raise EmptyTestSplit("manifest has no test frames")
    rows: list[PredictionRow] = []
    for offset, entry in enumerate(tests):
        amap = _frame_map(manifest, entry, default_roi)
        raw = predict(bundle.regressor, frame_vector(bundle, amap))
        rows.append(
            PredictionRow(
                index=manifest.split + offset + 1,
                truth=entry.count,
                raw=raw,
                rounded=rounded_count(raw),
            )
        )
    report = score(
        np.array([r.truth for r in rows], dtype=np.float64),
        np.array([r.raw for r in rows], dtype=np.float64),
    )
    return report, rows


def write_predictions_csv(rows: list[PredictionRow], path: str | Path) -> None:
    lines = ["index,truth,raw,rounded"]
    lines += [f"{r.index},{r.truth},{r.raw!r},{r.rounded}" for r in rows]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write predictions {path}: {exc}") from exc


@dataclass(frozen=True)
class BaselineComparison:
    """Four-way baseline study on one dataset plus a similarity triple."""

    rows: tuple[tuple[str, float, float], ...]
    similarity: dict[str, tuple[float, float, float]]
    frames: tuple[int, int, int]

    def format_metrics_table(self) -> str:
        lines = [f"{'method':<10}{'mae':>10}{'mse':>10}"]
        for mode, mae, mse in self.rows:
            lines.append(f"{mode:<10}{mae:>10.2f}{mse:>10.2f}")
        return "\n".join(lines)

    def format_similarity_table(self) -> str:
        a, b, c = self.frames
        modes = [mode for mode, _, _ in self.rows]
        lines = [
            f"similarity frames: a={a} b={b} c={c}",
            f"{'':<16}" + "".join(f"{mode:>10}" for mode in modes),
        ]
        for label, idx in (("S(a,b)", 0), ("S(b,c)", 1), ("S(a,b)-S(b,c)", 2)):
            lines.append(
                f"{label:<16}"
                + "".join(f"{self.similarity[mode][idx]:>10.4f}" for mode in modes)
            )
        return "\n".join(lines)


def _pick_similarity_frames(manifest: DatasetManifest) -> tuple[int, int, int]:
    """Default operator choice: b and c share a count, a differs."""
    tests = manifest.test_entries()
    if len(tests) < 3:
        raise InvalidManifest("the similarity study needs at least three test frames")
    base = manifest.split + 1
    seen: dict[int, int] = {}
    pair = None
    for i, entry in enumerate(tests):
        if entry.count in seen:
            pair = (seen[entry.count], i)
            break
        seen[entry.count] = i
    if pair is None:
        return base, base + 1, base + 2
    b, c = pair
    a = next((i for i, e in enumerate(tests) if e.count != tests[b].count), None)
    if a is None:
        return base, base + 1, base + 2
    return base + a, base + b, base + c


def compare_baselines(
    manifest: DatasetManifest,
    config: PipelineConfig,
    default_roi: RoiMask | None = None,
    frames: tuple[int, int, int] | None = None,
) -> BaselineComparison:
    """Train and evaluate every encoder mode with a shared seed and dataset.

    Emits one (method, MAE, MSE) row per mode plus the S(a,b)/S(b,c)
    similarity triple for three operator-selected frames (1-based manifest
    indices; a default triple is picked from the test split).
    """
    if frames is None:
        frames = _pick_similarity_frames(manifest)
    for index in frames:
        if not 1 <= index <= manifest.frames:
            raise InvalidConfig(f"similarity frame {index} outside manifest")
    rows = []
    sims: dict[str, tuple[float, float, float]] = {}
    frame_maps = [
        _frame_map(manifest, manifest.entries[index - 1], default_roi)
        for index in frames
    ]
    for mode in MODES:
        mode_config = replace(config, mode=mode)
        bundle = train(manifest, mode_config, default_roi)
        report, _ = evaluate(manifest, bundle, default_roi)
        rows.append((mode, report.mae, report.mse))
        enc_a, enc_b, enc_c = (frame_encoding(bundle, amap) for amap in frame_maps)
        s_ab = similarity(enc_a, enc_b)
        s_bc = similarity(enc_b, enc_c)
        sims[mode] = (s_ab, s_bc, s_ab - s_bc)
    return BaselineComparison(rows=tuple(rows), similarity=sims, frames=frames)


# ---------------------------------------------------------------------------
# bundle persistence


_ARRAY_FILES = {
    "whiten_mean": lambda b: b.whitening.mean,
    "whiten_projection": lambda b: b.whitening.projection,
    "whiten_eigenvalues": lambda b: b.whitening.eigenvalues,
    "centroids": lambda b: b.codebook.centroids,
}


def save_bundle(bundle: ModelBundle, directory: str | Path) -> None:
    """Persist a bundle as a directory: `meta` text plus float32 array files."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create bundle directory {out}: {exc}") from exc
    lines = [("version", str(bundle.version)), ("digest", bundle.digest)]
    lines += bundle.config.meta_items()
    lines.append(("channels", str(bundle.channels)))
    lines.append(("lambda_resolved", repr(bundle.lambda_resolved)))
    lines.append(
        ("beta_resolved", "none" if bundle.beta_resolved is None else repr(bundle.beta_resolved))
    )
    lines.append(("intercept", repr(bundle.regressor.intercept)))
    lines.append(("regressor_dim", str(bundle.regressor.dim)))
    if bundle.whitening is not None:
        lines.append(("whiten_input_dim", str(bundle.whitening.input_dim)))
        lines.append(("whiten_output_dim", str(bundle.whitening.output_dim)))
        lines.append(("whiten_eps", repr(bundle.whitening.eps)))
        lines.append(("whiten_target", _format_target(bundle.whitening.target)))
        lines.append(("codebook_objective", repr(bundle.codebook.objective)))
        lines.append(("codebook_seed", str(bundle.codebook.seed)))
    try:
        (out / "meta").write_text(
            "".join(f"{k}={v}\n" for k, v in lines), encoding="utf-8"
        )
        _write_f32(out / "regressor_weights.f32", bundle.regressor.weights)
        if bundle.whitening is not None:
            for name, getter in _ARRAY_FILES.items():
                _write_f32(out / f"{name}.f32", getter(bundle))
    except OSError as exc:
        raise IoFailure(f"cannot write bundle to {out}: {exc}") from exc


def _write_f32(path: Path, array: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(array).astype("<f4").tobytes())


def _read_f32(path: Path, shape: tuple[int, ...]) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read bundle array {path}: {exc}") from exc
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise InconsistentDims(f"{path.name} holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def load_bundle(directory: str | Path) -> ModelBundle:
    """Load a bundle saved by save_bundle; validates version and digest."""
    root = Path(directory)
    try:
        text = (root / "meta").read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read bundle meta in {root}: {exc}") from exc
    meta: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise MalformedHeader(f"bad bundle meta line {line!r}")
        meta[key] = value
    if "version" not in meta:
        raise MalformedHeader("bundle meta is missing the mandatory version field")
    if int(meta["version"]) != BUNDLE_VERSION:
        raise MalformedHeader(f"unsupported bundle version {meta['version']}")
    config = PipelineConfig.from_meta(meta)
    if meta.get("digest") != config.digest():
        raise MalformedHeader("bundle digest does not match its configuration")
    channels = int(meta["channels"])
    regressor = RegressionModel(
        weights=_read_f32(root / "regressor_weights.f32", (int(meta["regressor_dim"]),)),
        intercept=float(meta["intercept"]),
        ridge_lambda=float(meta["lambda_resolved"]),
    )
    whitening = codebook = None
    if config.mode in ("lfv", "wvlad"):
        d_in = int(meta["whiten_input_dim"])
        d_out = int(meta["whiten_output_dim"])
        whitening = WhiteningTransform(
            mean=_read_f32(root / "whiten_mean.f32", (d_in,)),
            projection=_read_f32(root / "whiten_projection.f32", (d_out, d_in)),
            eigenvalues=_read_f32(root / "whiten_eigenvalues.f32", (d_out,)),
            eps=float(meta["whiten_eps"]),
            target=_parse_target(meta["whiten_target"]),
        )
        codebook = Codebook(
            centroids=_read_f32(root / "centroids.f32", (config.codebook_size, d_out)),
            objective=float(meta["codebook_objective"]),
            seed=int(meta["codebook_seed"]),
        )
    beta = meta.get("beta_resolved", "none")
    return ModelBundle(
        version=int(meta["version"]),
        config=config,
        channels=channels,
        regressor=regressor,
        lambda_resolved=float(meta["lambda_resolved"]),
        whitening=whitening,
        codebook=codebook,
        beta_resolved=None if beta == "none" else float(beta),
    )
