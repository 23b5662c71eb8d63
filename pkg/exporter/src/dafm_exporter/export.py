"""Batch export: images -> per-pixel class probabilities -> DAFM files.

Per image: run the segmenter, softmax its scores, bilinearly upsample the
per-class probabilities back to the input resolution, collapse classes
through the merge table, renormalize every pixel onto the simplex and
write a DAFM v1 file (renormalize flag unset).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .classmap import MergeTable
from .dafm import write_dafm
from .errors import InferenceFailure, IoFailure
from .models import IMAGENET_MEAN, IMAGENET_STD, LoadedModel


@dataclass(frozen=True)
class ExportJob:
    """One batch of images to convert with a shared model and merge table."""

    images: tuple[str, ...]
    model: str
    merge_table: MergeTable
    out_dir: str
    inference_size: int | None = None  # cap on the longer image side, None = native

    def __post_init__(self) -> None:
        if not self.images:
            raise IoFailure("export job lists no images")
        if self.inference_size is not None and self.inference_size < 32:
            raise IoFailure("inference size below 32 pixels is not useful")


def _load_image(path: str | Path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc


def _to_batch(image: Image.Image, model: LoadedModel, inference_size: int | None) -> torch.Tensor:
    if inference_size is not None and max(image.size) > inference_size:
        image = image.copy()
        image.thumbnail((inference_size, inference_size), Image.BILINEAR)
    array = np.asarray(image, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    if model.normalize:
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        tensor = (tensor - mean) / std
    return tensor.unsqueeze(0)


def compute_attribute_map(
    model: LoadedModel,
    image_path: str | Path,
    merge_table: MergeTable,
    inference_size: int | None = None,
) -> np.ndarray:
    """Per-pixel merged class probabilities for one image, shape (H, W, T).

    The returned array is exactly what export() writes, so callers can
    cross-check files against in-memory values.
    """
    image = _load_image(image_path)
    width, height = image.size
    batch = _to_batch(image, model, inference_size)
    logits = model.logits(batch)
    probabilities = torch.softmax(logits.to(torch.float32), dim=1)
    probabilities = torch.nn.functional.interpolate(
        probabilities, size=(height, width), mode="bilinear", align_corners=False
    )
    stack = probabilities[0].numpy()  # (classes, H, W)

    pairs = merge_table.resolve(model.class_names, stack.shape[0])
    merged = np.zeros((merge_table.channels, height, width), dtype=np.float64)
    for source, target in pairs:
        merged[target] += stack[source]
    sums = merged.sum(axis=0, keepdims=True)
    if not (sums > 0.0).all():
        raise InferenceFailure("merged probabilities vanish at some pixel")
    merged /= sums
    return np.ascontiguousarray(merged.transpose(1, 2, 0).astype(np.float32))


def export(job: ExportJob, model: LoadedModel) -> list[Path]:
    """Run the job and return the written DAFM paths (input order)."""
    out_dir = Path(job.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out_dir}: {exc}") from exc
    written: list[Path] = []
    for image_path in job.images:
        values = compute_attribute_map(model, image_path, job.merge_table, job.inference_size)
        target = out_dir / (Path(image_path).stem + ".dafm")
        write_dafm(values, target)
        written.append(target)
    return written
