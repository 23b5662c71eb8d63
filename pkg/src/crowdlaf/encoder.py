"""Residual-vector encodings of descriptor sets against a dictionary.

For every centroid, weighted residuals between the projected descriptors
and that centroid are accumulated and the per-centroid sums concatenated
into one fixed-length vector. Weights are either one-hot (nearest centroid)
or a truncated softmax over each descriptor's kappa nearest centroids, so
the one-hot scheme is the kappa=1 special case.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codebook import Codebook, squared_distances
from .errors import (
    DimensionMismatch,
    InvalidBeta,
    InvalidConfig,
    InvalidKappa,
    IoFailure,
    MalformedHeader,
    NotNormalized,
    ShapeMismatch,
)

RAW = "raw"
INTRA = "intra"
FULL = "full"

NORM_INTRA_GLOBAL = "intra+global"
NORM_GLOBAL = "global"
NORM_SCHEMES = (NORM_INTRA_GLOBAL, NORM_GLOBAL)

VENC_MAGIC = b"VENC"
VENC_VERSION = 1
_VENC_HEADER = struct.Struct("<4s2I")

_ROW_SUM_TOL = 1e-9


def _centroids(codebook: Codebook | np.ndarray) -> np.ndarray:
    matrix = codebook.centroids if isinstance(codebook, Codebook) else codebook
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected a (K, dim) codebook, got shape {matrix.shape}")
    return matrix


@dataclass(frozen=True)
class AssignmentWeights:
    """Row-stochastic descriptor-to-centroid weights.

    Hard mode rows are one-hot; soft mode rows carry at most `kappa`
    nonzeros and sum to one.
    """

    alpha: np.ndarray
    mode: str
    kappa: int
    beta: float | None = None

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=np.float64, copy=True)
        if alpha.ndim != 2:
            raise ShapeMismatch(f"expected an (N, K) weight matrix, got {alpha.shape}")
        if alpha.size:
            if (alpha < 0.0).any() or (alpha > 1.0).any():
                raise ShapeMismatch("weights must lie in [0, 1]")
            row_sums = alpha.sum(axis=1)
            if np.abs(row_sums - 1.0).max() > _ROW_SUM_TOL:
                raise ShapeMismatch("every weight row must sum to 1")
            support = np.count_nonzero(alpha, axis=1)
            if (support > self.kappa).any():
                raise ShapeMismatch(f"rows may carry at most {self.kappa} nonzeros")
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)


def assign_hard(descriptors: np.ndarray, codebook: Codebook | np.ndarray) -> AssignmentWeights:
    """One-hot assignment to each descriptor's nearest centroid.

    Distance ties go to the lowest centroid index.
    """
    xs = np.asarray(descriptors, dtype=np.float64)
    centers = _centroids(codebook)
    if xs.ndim != 2 or xs.shape[1] != centers.shape[1]:
        raise DimensionMismatch(
            f"descriptors {xs.shape} do not match codebook dim {centers.shape[1]}"
        )
    nearest = squared_distances(xs, centers).argmin(axis=1)
    alpha = np.zeros((xs.shape[0], centers.shape[0]), dtype=np.float64)
    alpha[np.arange(xs.shape[0]), nearest] = 1.0
    return AssignmentWeights(alpha, mode="hard", kappa=1, beta=None)


def soft_assignments(
    descriptors: np.ndarray,
    codebook: Codebook | np.ndarray,
    kappa: int,
    beta: float,
) -> AssignmentWeights:
    """Local soft-assignment weights.

    Each row is a softmax over -beta * squared distance, truncated to the
    descriptor's kappa nearest centroids (everything else gets weight zero).
    Exponentials subtract the row maximum first, so large beta cannot
    overflow. kappa=1 reproduces the hard assignment exactly.
    """
    xs = np.asarray(descriptors, dtype=np.float64)
    centers = _centroids(codebook)
    if xs.ndim != 2 or xs.shape[1] != centers.shape[1]:
        raise DimensionMismatch(
            f"descriptors {xs.shape} do not match codebook dim {centers.shape[1]}"
        )
    k_total = centers.shape[0]
    if not isinstance(kappa, (int, np.integer)) or not 1 <= kappa <= k_total:
        raise InvalidKappa(f"kappa must lie in [1, {k_total}], got {kappa!r}")
    if not np.isfinite(beta) or beta < 0.0:
        raise InvalidBeta(f"beta must be finite and non-negative, got {beta!r}")

    d2 = squared_distances(xs, centers)
    # stable sort so distance ties resolve to the lowest centroid index
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :kappa]
    exponents = -beta * np.take_along_axis(d2, neighbors, axis=1)
    exponents -= exponents.max(axis=1, keepdims=True)
    weights = np.exp(exponents)
    weights /= weights.sum(axis=1, keepdims=True)
    alpha = np.zeros_like(d2)
    np.put_along_axis(alpha, neighbors, weights, axis=1)
    return AssignmentWeights(alpha, mode="soft", kappa=int(kappa), beta=float(beta))


@dataclass(frozen=True)
class Encoding:
    """Concatenated per-centroid residual sums plus normalization state."""

    vector: np.ndarray
    state: str
    blocks: int
    config_digest: str = ""

    def __post_init__(self) -> None:
        vector = np.array(self.vector, dtype=np.float64, copy=True)
        if vector.ndim != 1:
            raise ShapeMismatch(f"encoding must be a flat vector, got {vector.shape}")
        if self.state not in (RAW, INTRA, FULL):
            raise InvalidConfig(f"unknown normalization state {self.state!r}")
        if self.blocks < 1 or vector.size % self.blocks:
            raise ShapeMismatch(
                f"vector of length {vector.size} does not split into {self.blocks} blocks"
            )
        vector.flags.writeable = False
        object.__setattr__(self, "vector", vector)

    @property
    def block_dim(self) -> int:
        return self.vector.size // self.blocks


def encode(
    descriptors: np.ndarray,
    codebook: Codebook | np.ndarray,
    weights: AssignmentWeights,
    zero_mask: np.ndarray | None = None,
    config_digest: str = "",
) -> Encoding:
    """Accumulate weighted residuals per centroid and concatenate them.

    Rows flagged in `zero_mask` (all-zero cells kept for grid stability)
    contribute nothing. The result is raw: normalize_encoding finishes it.
    """
    xs = np.asarray(descriptors, dtype=np.float64)
    centers = _centroids(codebook)
    alpha = weights.alpha
    if xs.ndim != 2:
        raise ShapeMismatch(f"expected (N, dim) descriptors, got {xs.shape}")
    if alpha.shape != (xs.shape[0], centers.shape[0]):
        raise ShapeMismatch(
            f"weights {alpha.shape} do not match {xs.shape[0]} descriptors "
            f"and {centers.shape[0]} centroids"
        )
    if xs.shape[1] != centers.shape[1]:
        raise ShapeMismatch(
            f"descriptor dim {xs.shape[1]} does not match codebook dim {centers.shape[1]}"
        )
    if zero_mask is not None:
        zero_mask = np.asarray(zero_mask, dtype=bool)
        if zero_mask.shape != (xs.shape[0],):
            raise ShapeMismatch("zero_mask length must match descriptor count")
        alpha = np.where(zero_mask[:, None], 0.0, alpha)
    residuals = alpha.T @ xs - alpha.sum(axis=0)[:, None] * centers
    return Encoding(
        residuals.reshape(-1),
        state=RAW,
        blocks=centers.shape[0],
        config_digest=config_digest,
    )


def normalize_encoding(encoding: Encoding, scheme: str = NORM_INTRA_GLOBAL) -> Encoding:
    """Finish a raw encoding: optional per-block L2, then global L2.

    Zero blocks and the all-zero vector stay zero.
    """
    if encoding.state != RAW:
        raise ValueError("normalize_encoding expects a raw encoding")
    if scheme not in NORM_SCHEMES:
        raise InvalidConfig(f"unknown normalization scheme {scheme!r}")
    vector = np.array(encoding.vector, copy=True)
    if scheme == NORM_INTRA_GLOBAL:
        blocks = vector.reshape(encoding.blocks, encoding.block_dim)
        norms = np.linalg.norm(blocks, axis=1)
        blocks /= np.where(norms == 0.0, 1.0, norms)[:, None]
        vector = blocks.reshape(-1)
    total = np.linalg.norm(vector)
    if total > 0.0:
        vector /= total
    return replace(encoding, vector=vector, state=FULL)


def similarity(a: Encoding, b: Encoding) -> float:
    """Linear similarity (inner product) of two fully normalized encodings."""
    if a.state != FULL or b.state != FULL:
        raise NotNormalized("similarity is defined on fully normalized encodings")
    if a.vector.shape != b.vector.shape:
        raise DimensionMismatch(
            f"encoding lengths differ: {a.vector.size} vs {b.vector.size}"
        )
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


def store_encoding(encoding: Encoding, path: str | Path) -> None:
    header = _VENC_HEADER.pack(VENC_MAGIC, VENC_VERSION, encoding.vector.size)
    try:
        Path(path).write_bytes(header + encoding.vector.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write encoding file {path}: {exc}") from exc


def load_encoding(path: str | Path) -> np.ndarray:
    """Read a persisted encoding back as a float32 vector."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read encoding file {path}: {exc}") from exc
    if len(raw) < _VENC_HEADER.size or raw[:4] != VENC_MAGIC:
        raise MalformedHeader(f"{path} is not an encoding file")
    _, version, length = _VENC_HEADER.unpack_from(raw)
    if version != VENC_VERSION:
        raise MalformedHeader(f"unsupported encoding file version {version}")
    payload = raw[_VENC_HEADER.size :]
    if len(payload) != length * 4:
        raise DimensionMismatch("encoding payload does not match header length")
    return np.frombuffer(payload, dtype="<f4").copy()
