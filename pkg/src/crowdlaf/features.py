"""Local descriptor extraction over attribute maps.

A frame is divided into a grid of cells and every cell is pooled over a
small sub-grid: the per-channel means of its sub-cells are concatenated
(sub-cells in row-major order) and L2-normalized into one descriptor per
cell. The whole-frame mean baseline and the single-level spatial-pyramid
baseline fall out of the same machinery with degenerate grids, which keeps
the reduction identities exact at the bit level.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attribute_map import AttributeMap
from .errors import (
    DimensionMismatch,
    EmptyMap,
    GridTooFine,
    InvalidConfig,
    IoFailure,
    MalformedHeader,
)

LAFD_MAGIC = b"LAFD"
LAFD_VERSION = 1
_LAFD_HEADER = struct.Struct("<4s3I")


@dataclass(frozen=True)
class GridSpec:
    """Frame partition: cell_rows x cell_cols cells, each mean-pooled over a
    pyramid_rows x pyramid_cols sub-grid."""

    cell_rows: int
    cell_cols: int
    pyramid_rows: int = 1
    pyramid_cols: int = 1

    def __post_init__(self) -> None:
        for name in ("cell_rows", "cell_cols", "pyramid_rows", "pyramid_cols"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidConfig(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {value}")

    @property
    def cells(self) -> int:
        return self.cell_rows * self.cell_cols

    @property
    def subcells(self) -> int:
        return self.pyramid_rows * self.pyramid_cols

    def descriptor_length(self, channels: int) -> int:
        return self.subcells * channels


@dataclass(frozen=True)
class DescriptorSet:
    """One descriptor per cell, cells in row-major order.

    Rows are unit vectors except for cells whose pixels are all zero (cells
    fully outside a ROI); those rows stay zero and are flagged in zero_mask
    so dictionary learning can skip them and encoding can weight them out.
    """

    vectors: np.ndarray
    grid: GridSpec
    zero_mask: np.ndarray

    def __post_init__(self) -> None:
        vectors = np.array(self.vectors, dtype=np.float64, order="C", copy=True)
        zero_mask = np.array(self.zero_mask, dtype=bool, copy=True)
        if vectors.ndim != 2 or vectors.shape[0] != self.grid.cells:
            raise DimensionMismatch(
                f"expected {self.grid.cells} descriptors, got shape {vectors.shape}"
            )
        if zero_mask.shape != (vectors.shape[0],):
            raise DimensionMismatch("zero_mask length must match descriptor count")
        vectors.flags.writeable = False
        zero_mask.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "zero_mask", zero_mask)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def _bounds(extent: int, parts: int) -> np.ndarray:
    # floor(i * extent / parts) for i = 0..parts; integer-exact, so every
    # pixel lands in exactly one part and edge parts absorb the remainder
    return (np.arange(parts + 1, dtype=np.int64) * extent) // parts


def pooled_sums(amap: AttributeMap, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Raw per-sub-cell channel sums and pixel counts.

    Returns (sums, areas) with shapes (cells, subcells, channels) and
    (cells, subcells); cells and sub-cells are row-major. The descriptor
    builders divide these, but tests can check mass conservation on the
    undivided sums.
    """
    m, n, p = amap.data.shape
    cell_y = _bounds(m, grid.cell_rows)
    cell_x = _bounds(n, grid.cell_cols)

    ys = np.empty((grid.cell_rows, grid.pyramid_rows + 1), dtype=np.int64)
    for i in range(grid.cell_rows):
        h = int(cell_y[i + 1] - cell_y[i])
        if h < grid.pyramid_rows:
            raise GridTooFine(
                f"cell row {i} is {h} pixels tall, cannot hold "
                f"{grid.pyramid_rows} sub-rows"
            )
        ys[i] = cell_y[i] + _bounds(h, grid.pyramid_rows)
    xs = np.empty((grid.cell_cols, grid.pyramid_cols + 1), dtype=np.int64)
    for j in range(grid.cell_cols):
        w = int(cell_x[j + 1] - cell_x[j])
        if w < grid.pyramid_cols:
            raise GridTooFine(
                f"cell column {j} is {w} pixels wide, cannot hold "
                f"{grid.pyramid_cols} sub-columns"
            )
        xs[j] = cell_x[j] + _bounds(w, grid.pyramid_cols)

    integral = np.zeros((m + 1, n + 1, p), dtype=np.float64)
    integral[1:, 1:] = amap.data.astype(np.float64).cumsum(axis=0).cumsum(axis=1)

    y0 = ys[:, :-1][:, :, None, None]
    y1 = ys[:, 1:][:, :, None, None]
    x0 = xs[:, :-1][None, None, :, :]
    x1 = xs[:, 1:][None, None, :, :]
    sums = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
    areas = (y1 - y0) * (x1 - x0)
    # (cell_rows, pyr_rows, cell_cols, pyr_cols, ...) -> row-major cells, then sub-cells
    sums = np.ascontiguousarray(sums.transpose(0, 2, 1, 3, 4)).reshape(
        grid.cells, grid.subcells, p
    )
    areas = np.ascontiguousarray(areas.transpose(0, 2, 1, 3)).reshape(
        grid.cells, grid.subcells
    )
    return sums, areas


def extract_descriptors(amap: AttributeMap, grid: GridSpec) -> DescriptorSet:
    """Pool the map over the grid and return one unit descriptor per cell.

    Descriptor layout: sub-cell 0 channels, sub-cell 1 channels, ... so the
    descriptor length is subcells * channels.
    """
    sums, areas = pooled_sums(amap, grid)
    means = sums / areas[:, :, None]
    vectors = means.reshape(grid.cells, grid.descriptor_length(amap.channels))
    norms = np.linalg.norm(vectors, axis=1)
    zero = norms == 0.0
    vectors = vectors / np.where(zero, 1.0, norms)[:, None]
    return DescriptorSet(vectors, grid, zero)


def holistic_feature(amap: AttributeMap) -> np.ndarray:
    """Whole-frame per-channel mean, L2-normalized (the holistic baseline)."""
    if amap.height == 0 or amap.width == 0:
        raise EmptyMap("cannot pool a map with no pixels")
    return extract_descriptors(amap, GridSpec(1, 1, 1, 1)).vectors[0]


def pyramid_feature(amap: AttributeMap, pyramid: tuple[int, int]) -> np.ndarray:
    """Whole-frame spatial-pyramid feature: one cell pooled over the pyramid."""
    if amap.height == 0 or amap.width == 0:
        raise EmptyMap("cannot pool a map with no pixels")
    return extract_descriptors(amap, GridSpec(1, 1, pyramid[0], pyramid[1])).vectors[0]


def store_descriptors(descriptors: DescriptorSet | np.ndarray, path: str | Path) -> None:
    """Dump a descriptor matrix for external oracles and the CLI.

    Layout: magic, version, descriptor length d, count N, then the d x N
    matrix as float32 in column-major order (one descriptor contiguous).
    """
    matrix = (
        descriptors.vectors
        if isinstance(descriptors, DescriptorSet)
        else np.asarray(descriptors)
    )
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D descriptor matrix, got {matrix.shape}")
    count, dim = matrix.shape
    header = _LAFD_HEADER.pack(LAFD_MAGIC, LAFD_VERSION, dim, count)
    try:
        Path(path).write_bytes(header + matrix.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write descriptor file {path}: {exc}") from exc


def load_descriptors(path: str | Path) -> np.ndarray:
    """Read a descriptor dump back as a (count, dim) float32 matrix."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read descriptor file {path}: {exc}") from exc
    if len(raw) < _LAFD_HEADER.size or raw[:4] != LAFD_MAGIC:
        raise MalformedHeader(f"{path} is not a descriptor dump")
    _, version, dim, count = _LAFD_HEADER.unpack_from(raw)
    if version != LAFD_VERSION:
        raise MalformedHeader(f"unsupported descriptor dump version {version}")
    payload = raw[_LAFD_HEADER.size :]
    if len(payload) != dim * count * 4:
        raise DimensionMismatch("descriptor payload does not match header dims")
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
