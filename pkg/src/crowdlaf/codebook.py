"""PCA+whitening projection and k-means dictionary learning.

Both stages are fit offline on pooled training descriptors and are fully
deterministic given their seed, so persisted models reproduce bit-identical
encodings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateData,
    DimensionMismatch,
    InvalidConfig,
    InvalidTarget,
    TooFewPoints,
)


def squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (len(points), len(centers))."""
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centers, centers)[None, :]
    d2 = p2 + c2 - 2.0 * (points @ centers.T)
    return np.maximum(d2, 0.0, out=d2)


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine projection onto the top principal axes with per-axis rescaling.

    Rows of `projection` are eigenvectors of the training covariance divided
    by sqrt(eigenvalue + eps), so projecting the training sample yields a
    near-identity covariance. Eigenvector signs are fixed by making each
    row's largest-magnitude component positive.
    """

    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    eps: float
    target: float | int

    def __post_init__(self) -> None:
        mean = np.array(self.mean, copy=True)
        projection = np.array(self.projection, copy=True)
        eigenvalues = np.array(self.eigenvalues, copy=True)
        if projection.ndim != 2 or mean.ndim != 1:
            raise DimensionMismatch("projection must be 2-D and mean 1-D")
        if projection.shape[1] != mean.shape[0]:
            raise DimensionMismatch("projection columns must match mean length")
        if eigenvalues.shape != (projection.shape[0],):
            raise DimensionMismatch("one eigenvalue per projection row expected")
        if (np.diff(eigenvalues) > 0).any() or (eigenvalues < 0).any():
            raise DegenerateData("eigenvalues must be non-negative, non-increasing")
        for arr in (mean, projection, eigenvalues):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "projection", projection)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    @property
    def output_dim(self) -> int:
        return self.projection.shape[0]


def fit_whitening(
    descriptors: np.ndarray,
    target: float | int = 0.95,
    eps: float | None = None,
) -> WhiteningTransform:
    """Fit the whitening projection on a descriptor sample.

    `target` is either the variance fraction to retain (float in (0, 1],
    the smallest dimension reaching it wins) or a fixed output dimension
    (int). `eps` regularizes near-zero eigenvalues; the default scales with
    the average variance so it stays negligible against leading axes.
    """
    xs = np.asarray(descriptors, dtype=np.float64)
    if xs.ndim != 2:
        raise DimensionMismatch(f"expected (count, dim) descriptors, got {xs.shape}")
    n, d = xs.shape
    if n < 2 or np.unique(xs, axis=0).shape[0] < 2:
        raise DegenerateData("need at least two distinct descriptors")
    mean = xs.mean(axis=0)
    centered = xs - mean
    cov = (centered.T @ centered) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals[::-1], 0.0, None)
    eigvecs = eigvecs[:, ::-1]
    total = float(eigvals.sum())
    if total <= 0.0:
        raise DegenerateData("descriptor sample has zero covariance")
    if eps is None:
        eps = 1e-8 * total / d
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")

    positive = int((eigvals > eigvals[0] * 1e-12).sum())
    if isinstance(target, bool) or not isinstance(target, (int, float, np.integer, np.floating)):
        raise InvalidTarget(f"target must be a fraction or a dimension, got {target!r}")
    if isinstance(target, (int, np.integer)):
        if not 1 <= int(target) <= d:
            raise InvalidTarget(f"fixed output dimension must lie in [1, {d}]")
        out = int(target)
    else:
        frac = float(target)
        if not 0.0 < frac <= 1.0:
            raise InvalidTarget("variance fraction must lie in (0, 1]")
        reached = np.cumsum(eigvals) / total
        out = int(np.searchsorted(reached, frac - 1e-12) + 1)
        out = max(1, min(out, positive))

    vectors = eigvecs[:, :out].T.copy()
    flip = vectors[np.arange(out), np.abs(vectors).argmax(axis=1)] < 0
    vectors[flip] *= -1.0
    projection = vectors / np.sqrt(eigvals[:out] + eps)[:, None]
    return WhiteningTransform(
        mean=mean,
        projection=projection,
        eigenvalues=eigvals[:out],
        eps=eps,
        target=target,
    )


def project(transform: WhiteningTransform, x: np.ndarray) -> np.ndarray:
    """Apply the whitening projection to one vector or a stack of vectors."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1:] != (transform.input_dim,):
        raise DimensionMismatch(
            f"expected vectors of length {transform.input_dim}, got shape {arr.shape}"
        )
    return (arr - transform.mean) @ transform.projection.T


@dataclass(frozen=True)
class Codebook:
    """K-means dictionary in the whitened descriptor space.

    `objective` is the sum of squared point-to-centroid distances at
    convergence; `history` records it after every assignment step so callers
    can audit Lloyd monotonicity.
    """

    centroids: np.ndarray
    objective: float
    seed: int
    history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        centroids = np.array(self.centroids, copy=True)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise DimensionMismatch("centroids must form a (K, dim) matrix, K >= 1")
        if not np.isfinite(centroids).all():
            raise DegenerateData("centroids must be finite")
        if np.unique(centroids, axis=0).shape[0] != centroids.shape[0]:
            raise DegenerateData("codebook contains duplicate centroids")
        centroids.flags.writeable = False
        object.__setattr__(self, "centroids", centroids)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _plus_plus_init(xs: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ seeding; never picks the same location twice."""
    n = xs.shape[0]
    centers = np.empty((k, xs.shape[1]), dtype=np.float64)
    idx = int(rng.integers(n))
    centers[0] = xs[idx]
    d2 = squared_distances(xs, centers[:1])[:, 0]
    d2[(xs == centers[0]).all(axis=1)] = 0.0
    for j in range(1, k):
        probs = d2 / d2.sum()
        idx = int(rng.choice(n, p=probs))
        centers[j] = xs[idx]
        d2 = np.minimum(d2, squared_distances(xs, centers[j : j + 1])[:, 0])
        d2[(xs == centers[j]).all(axis=1)] = 0.0
    return centers


def _reseed_empty(
    centers: np.ndarray, xs: np.ndarray, assign: np.ndarray, point_d2: np.ndarray
) -> np.ndarray:
    """Move each empty cluster onto the point farthest from its centroid."""
    counts = np.bincount(assign, minlength=centers.shape[0])
    empty = np.flatnonzero(counts == 0)
    if not empty.size:
        return centers
    centers = centers.copy()
    far = point_d2.copy()
    for e in empty:
        p = int(far.argmax())
        centers[e] = xs[p]
        far[p] = -1.0
    return centers


def _lloyd(
    xs: np.ndarray, centers: np.ndarray, max_iters: int, tol: float
) -> tuple[np.ndarray, list[float]]:
    n, _ = xs.shape
    k = centers.shape[0]
    rows = np.arange(n)
    history: list[float] = []
    for _ in range(max_iters):
        d2 = squared_distances(xs, centers)
        assign = d2.argmin(axis=1)
        point_d2 = d2[rows, assign]
        history.append(float(point_d2.sum()))
        counts = np.bincount(assign, minlength=k)
        new = np.empty_like(centers)
        for j in range(xs.shape[1]):
            new[:, j] = np.bincount(assign, weights=xs[:, j], minlength=k)
        nonzero = counts > 0
        new[nonzero] /= counts[nonzero, None]
        new[~nonzero] = centers[~nonzero]
        new = _reseed_empty(new, xs, assign, point_d2)
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    # settle: make sure the recorded objective matches the final centroids and
    # that no cluster is left empty (re-seeding repeats until all are served)
    for _ in range(k + 1):
        d2 = squared_distances(xs, centers)
        assign = d2.argmin(axis=1)
        point_d2 = d2[rows, assign]
        history.append(float(point_d2.sum()))
        fixed = _reseed_empty(centers, xs, assign, point_d2)
        if fixed is centers:
            break
        centers = fixed
    return centers, history


def fit_codebook(
    descriptors: np.ndarray,
    size: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-9,
) -> Codebook:
    """Learn a k-means dictionary: seeded k-means++ start, Lloyd iterations
    until the largest centroid shift drops below `tol`.

    Deterministic given the seed; empty clusters are re-seeded with the point
    farthest from its centroid, which keeps the objective non-increasing.
    """
    xs = np.asarray(descriptors, dtype=np.float64)
    if xs.ndim != 2:
        raise DimensionMismatch(f"expected (count, dim) descriptors, got {xs.shape}")
    if size < 1:
        raise InvalidConfig("codebook size must be >= 1")
    if np.unique(xs, axis=0).shape[0] < size:
        raise TooFewPoints(f"need at least {size} distinct descriptors")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(xs, size, rng)
    centers, history = _lloyd(xs, centers, max_iters, tol)
    return Codebook(
        centroids=centers, objective=history[-1], seed=seed, history=tuple(history)
    )
