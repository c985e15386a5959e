"""Deterministic k-means vector quantization (codebook training)."""

from __future__ import annotations

import warnings

import numpy as np

from .prng import Xoshiro256StarStar


def nearest_index(x: np.ndarray, centroids: np.ndarray) -> int:
    """Index of the closest centroid (Euclidean, lowest index on ties)."""
    d = np.sum((centroids - x) ** 2, axis=1)
    return int(np.argmin(d))


def assign_all(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid index per row, lowest index on ties."""
    d = sq_distances(features, centroids)
    return np.argmin(d, axis=1)


def sq_distances(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, shape (n_points, n_centroids)."""
    # (x-c)^2 expansion; clip tiny negatives from cancellation
    d = (
        np.sum(features**2, axis=1)[:, None]
        - 2.0 * features @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp_init(features: np.ndarray, k: int, rng: Xoshiro256StarStar) -> np.ndarray:
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    first = rng.randint_below(n)
    centers[0] = features[first]
    d2 = np.sum((features - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all points coincide with chosen centers; duplicate uniformly
            idx = rng.randint_below(n)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[i] = features[idx]
        d2 = np.minimum(d2, np.sum((features - centers[i]) ** 2, axis=1))
    return centers


def train_codebook(
    features,
    k: int,
    max_iters: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> np.ndarray:
    """k-means with k-means++ seeding, fully deterministic for fixed inputs.

    Ties in assignment go to the lowest centroid index; an emptied
    cluster is reseeded to the point farthest from its current centroid.
    Returns a (k, dim) centroid array.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("features must be a nonempty 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = features.shape[0]
    n_distinct = np.unique(features, axis=0).shape[0]
    if k > n_distinct:
        warnings.warn(
            f"k={k} exceeds {n_distinct} distinct points; duplicate centroids expected",
            stacklevel=2,
        )

    rng = Xoshiro256StarStar(seed)
    centers = _kmeanspp_init(features, k, rng)
    prev_cost = np.inf
    for _ in range(max_iters):
        d = sq_distances(features, centers)
        assign = np.argmin(d, axis=1)
        cost = float(d[np.arange(n), assign].sum())
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = features[members].mean(axis=0)
            else:
                far = int(np.argmax(d[np.arange(n), assign]))
                centers[j] = features[far]
        if prev_cost < np.inf:
            rel = (prev_cost - cost) / prev_cost if prev_cost > 0 else 0.0
            if rel < tol:
                break
        prev_cost = cost
    return centers


def total_distortion(features: np.ndarray, centroids: np.ndarray) -> float:
    """Summed squared distance of every point to its nearest centroid."""
    features = np.asarray(features, dtype=np.float64)
    d = sq_distances(features, centroids)
    return float(d.min(axis=1).sum())
