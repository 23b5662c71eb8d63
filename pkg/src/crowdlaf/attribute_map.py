"""Dense per-pixel attribute probability maps.

A map assigns every pixel a probability distribution over the scene's
semantic classes (person, road, vegetation, ...). This module owns the
binary file format for such maps, region-of-interest masking, a synthetic
scene generator with known ground-truth person counts, and a debug
rendering of the per-pixel argmax class.
"""

from __future__ import annotations

import colorsys
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyRoi,
    InvalidSpec,
    IoFailure,
    MalformedHeader,
    PaletteTooSmall,
    SimplexViolation,
)

DAFM_MAGIC = b"DAFM"
DAFM_VERSION = 1
FLAG_RENORMALIZE = 0x1
_HEADER = struct.Struct("<4s5I")

# Loose enough to absorb float32 rounding from external softmax exporters.
SIMPLEX_TOL = 1e-3

# Synthetic scenes put person probability mass on this channel.
PERSON_CHANNEL = 0

Color = tuple[int, int, int]


def _check_probabilities(data: np.ndarray) -> None:
    """Enforce the per-pixel distribution contract.

    Every value must lie in [0, 1] and every pixel must either sum to 1
    within SIMPLEX_TOL or be all-zero (a pixel zeroed out by a ROI mask is
    exempt from the distribution constraint).
    """
    if not np.isfinite(data).all():
        raise SimplexViolation("map contains non-finite values")
    if (data < 0.0).any() or (data > 1.0).any():
        raise SimplexViolation("probabilities outside [0, 1]")
    sums = data.sum(axis=2, dtype=np.float64)
    bad = (np.abs(sums - 1.0) > SIMPLEX_TOL) & (sums != 0.0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise SimplexViolation(
            f"pixel ({i}, {j}) sums to {sums[i, j]:.6f}, outside 1 +/- {SIMPLEX_TOL}"
        )


@dataclass(frozen=True)
class AttributeMap:
    """Per-pixel class probabilities, shape (height, width, channels), float32.

    Instances are validated on construction and immutable afterwards, so they
    can be shared read-only across workers.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if data.ndim != 3:
            raise DimensionMismatch(
                f"expected (height, width, channels) data, got shape {data.shape}"
            )
        if data.shape[2] < 1:
            raise DimensionMismatch("a map needs at least one channel")
        _check_probabilities(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class RoiMask:
    """Boolean region-of-interest mask; True marks pixels inside the ROI."""

    inside: np.ndarray

    def __post_init__(self) -> None:
        inside = np.array(self.inside, dtype=bool, copy=True)
        if inside.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D mask, got shape {inside.shape}")
        if not inside.any():
            raise EmptyRoi("ROI mask selects no pixels")
        inside.flags.writeable = False
        object.__setattr__(self, "inside", inside)

    @property
    def height(self) -> int:
        return self.inside.shape[0]

    @property
    def width(self) -> int:
        return self.inside.shape[1]


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for a synthetic scene with a known person count.

    Each person is an isotropic Gaussian bump of person-class probability
    mass (truncated at three radii) placed uniformly at random on top of a
    fixed background class mixture; every pixel is renormalized back onto
    the probability simplex afterwards.
    """

    height: int
    width: int
    channels: int
    count: int
    blob_radius: float = 3.0
    background: tuple[float, ...] | None = None
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise InvalidSpec("scene must have a positive pixel area")
        if self.channels < 1:
            raise InvalidSpec("scene needs at least one attribute class")
        if self.count < 0:
            raise InvalidSpec("person count must be non-negative")
        if not (0.0 < self.blob_radius <= min(self.height, self.width)):
            raise InvalidSpec("blob radius must be positive and fit inside the frame")
        if not (0.0 <= self.noise <= 0.2):
            raise InvalidSpec("noise level must lie in [0, 0.2]")
        background = self.background
        if background is None:
            # everything-but-person mass spread evenly over the other classes
            if self.channels == 1:
                background = (1.0,)
            else:
                share = 1.0 / (self.channels - 1)
                background = (0.0,) + (share,) * (self.channels - 1)
        background = tuple(float(b) for b in background)
        if len(background) != self.channels:
            raise InvalidSpec("background mixture length must equal channel count")
        if any(b < 0.0 for b in background) or abs(sum(background) - 1.0) > 1e-6:
            raise InvalidSpec("background mixture must be a probability vector")
        object.__setattr__(self, "background", background)


def load_map(path: str | Path) -> AttributeMap:
    """Read and validate an attribute map from its binary file format.

    The header's renormalize flag asks the loader to divide each pixel by its
    channel sum before validation (all-zero pixels are left untouched).
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read map file {path}: {exc}") from exc
    if len(raw) < _HEADER.size or raw[:4] != DAFM_MAGIC:
        raise MalformedHeader(f"{path} is not a DAFM file")
    _, version, flags, height, width, channels = _HEADER.unpack_from(raw)
    if version != DAFM_VERSION:
        raise MalformedHeader(f"unsupported DAFM version {version}")
    payload = raw[_HEADER.size :]
    expected = height * width * channels * 4
    if len(payload) != expected:
        raise DimensionMismatch(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    if channels < 1:
        raise DimensionMismatch("a map needs at least one channel")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
    if flags & FLAG_RENORMALIZE:
        buf = values.astype(np.float64)
        if not np.isfinite(buf).all() or (buf < 0.0).any():
            raise SimplexViolation("renormalization needs finite non-negative values")
        sums = buf.sum(axis=2, keepdims=True)
        np.divide(buf, sums, out=buf, where=sums > 0.0)
        values = buf.astype(np.float32)
    return AttributeMap(values)


def store_map(amap: AttributeMap, path: str | Path) -> None:
    """Write a map in the binary format; load_map round-trips it bit-exactly."""
    header = _HEADER.pack(
        DAFM_MAGIC, DAFM_VERSION, 0, amap.height, amap.width, amap.channels
    )
    try:
        Path(path).write_bytes(header + amap.data.astype("<f4", copy=False).tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write map file {path}: {exc}") from exc


def _pnm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """Collect `count` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the first payload byte (one
    whitespace character past the last token).
    """
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(raw):
            raise MalformedHeader("truncated image header")
        c = raw[i]
        if c in b" \t\r\n":
            i += 1
        elif c == ord("#"):
            while i < len(raw) and raw[i] != ord("\n"):
                i += 1
        else:
            j = i
            while j < len(raw) and raw[j] not in b" \t\r\n#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    return tokens, i + 1


def load_roi_mask(path: str | Path) -> RoiMask:
    """Read an 8-bit binary PGM mask; any nonzero sample is inside the ROI."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read ROI file {path}: {exc}") from exc
    if not raw.startswith(b"P5"):
        raise MalformedHeader(f"{path} is not a binary PGM file")
    tokens, offset = _pnm_tokens(raw[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeader(f"bad PGM header in {path}") from exc
    if not (1 <= maxval <= 255):
        raise MalformedHeader("ROI masks must be 8-bit PGM")
    payload = raw[2 + offset :]
    if len(payload) < height * width:
        raise DimensionMismatch(
            f"PGM payload holds {len(payload)} bytes, header promises {height * width}"
        )
    samples = np.frombuffer(payload[: height * width], dtype=np.uint8)
    return RoiMask(samples.reshape(height, width) > 0)


def store_roi_mask(mask: RoiMask, path: str | Path) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    payload = np.where(mask.inside, 255, 0).astype(np.uint8).tobytes()
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise IoFailure(f"cannot write ROI file {path}: {exc}") from exc


def apply_roi(amap: AttributeMap, mask: RoiMask) -> AttributeMap:
    """Zero every pixel outside the mask; pixels inside are untouched.

    Masked maps keep the frame geometry intact so grid partitions stay
    comparable across frames of one scene. Idempotent.
    """
    if (mask.height, mask.width) != (amap.height, amap.width):
        raise DimensionMismatch(
            f"mask is {mask.height}x{mask.width}, map is {amap.height}x{amap.width}"
        )
    data = np.where(mask.inside[:, :, None], amap.data, np.float32(0.0))
    return AttributeMap(data)


def synth_scene(spec: SceneSpec) -> tuple[AttributeMap, int]:
    """Render a synthetic scene; returns the map and its true person count.

    Deterministic: equal specs produce byte-identical maps. Blob centers are
    drawn one per person, so for a fixed seed and zero noise, raising the
    count only adds blobs on top of the ones already placed.
    """
    rng = np.random.default_rng(spec.seed)
    m, n, p = spec.height, spec.width, spec.channels
    radius = float(spec.blob_radius)
    cut = 3.0 * radius
    # keep the truncated bump fully inside the frame when there is room
    lo_y, hi_y = (cut, m - cut) if m > 2.0 * cut else (0.0, float(m))
    lo_x, hi_x = (cut, n - cut) if n > 2.0 * cut else (0.0, float(n))

    bump = np.zeros((m, n), dtype=np.float64)
    for _ in range(spec.count):
        cy = rng.uniform(lo_y, hi_y)
        cx = rng.uniform(lo_x, hi_x)
        y0, y1 = max(0, math.floor(cy - cut)), min(m, math.ceil(cy + cut) + 1)
        x0, x1 = max(0, math.floor(cx - cut)), min(n, math.ceil(cx + cut) + 1)
        yy = np.arange(y0, y1, dtype=np.float64)[:, None]
        xx = np.arange(x0, x1, dtype=np.float64)[None, :]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        w = np.exp(-d2 / (2.0 * radius * radius))
        w[d2 > cut * cut] = 0.0
        bump[y0:y1, x0:x1] += w

    data = np.empty((m, n, p), dtype=np.float64)
    data[:] = np.asarray(spec.background, dtype=np.float64)
    data[:, :, PERSON_CHANNEL] += bump
    data /= 1.0 + bump[:, :, None]

    if spec.noise > 0.0:
        data += rng.normal(0.0, spec.noise, size=data.shape)
        np.clip(data, 0.0, 1.0, out=data)
        sums = data.sum(axis=2, keepdims=True)
        # a pixel clipped to all-zero falls back to the uniform distribution
        data = np.where(sums > 0.0, data / np.where(sums > 0.0, sums, 1.0), 1.0 / p)

    return AttributeMap(data.astype(np.float32)), spec.count


def default_palette(channels: int) -> list[Color]:
    """Deterministic table of visually distinct colors, one per class."""
    palette: list[Color] = []
    for k in range(channels):
        r, g, b = colorsys.hsv_to_rgb(k / max(channels, 1), 0.85, 0.95)
        palette.append((round(r * 255), round(g * 255), round(b * 255)))
    return palette


def render_argmax(
    amap: AttributeMap, palette: Sequence[Color], path: str | Path
) -> None:
    """Write a binary PPM coloring each pixel by its strongest class.

    Ties go to the lowest channel index, so rendering is deterministic.
    """
    if len(palette) < amap.channels:
        raise PaletteTooSmall(
            f"palette has {len(palette)} entries for {amap.channels} classes"
        )
    table = np.asarray(palette, dtype=np.uint8)
    labels = amap.data.argmax(axis=2)
    pixels = table[labels]
    header = f"P6\n{amap.width} {amap.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc
