"""K-means over per-client feature points (dissimilarity score, dataset size).

Plain Lloyd iterations with k-means++ seeding. Point counts here are tiny (at
most the number of clients per round), so clarity wins over vectorized
cleverness. Ties always break to the lowest cluster index and empty clusters
are reseeded with the point farthest from its centroid, which keeps the
inertia sequence non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeaturePoint:
    client_id: int
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 1:
            raise ValueError(f"coords must be 1-D, got ndim={coords.ndim}")
        if not np.isfinite(coords).all():
            raise ValueError(f"non-finite coords for client {self.client_id}")
        object.__setattr__(self, "coords", coords)


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray          # (k, d)
    assignments: dict[int, int]    # client_id -> cluster index
    inertia: float

    def cluster_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {}
        for j in self.assignments.values():
            sizes[j] = sizes.get(j, 0) + 1
        return sizes


def standardize(points: list[FeaturePoint]) -> list[FeaturePoint]:
    """Shift/scale each coordinate to zero mean, unit variance (population std).

    A zero-variance coordinate maps to all zeros.
    """
    if len(points) < 2:
        raise ValueError(f"standardize needs at least 2 points, got {len(points)}")
    coords = np.stack([p.coords for p in points])
    mean = coords.mean(axis=0)
    std = coords.std(axis=0)
    scaled = np.where(std > 0, (coords - mean) / np.where(std > 0, std, 1.0), 0.0)
    return [FeaturePoint(p.client_id, row) for p, row in zip(points, scaled)]


def _nearest(coords: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assignment with ties broken to the lowest cluster index (argmin behavior)."""
    d2 = ((coords[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2


def _fix_empty(coords, centroids, labels, d2):
    """Reseed each empty cluster at the point farthest from its assigned centroid."""
    while True:
        counts = np.bincount(labels, minlength=centroids.shape[0])
        empties = np.flatnonzero(counts == 0)
        if empties.size == 0:
            return centroids, labels, d2, False
        own = d2[np.arange(coords.shape[0]), labels]
        far = int(own.argmax())
        if own[far] <= 0.0:
            # fewer distinct points than clusters; caller drops leftover clusters
            return centroids, labels, d2, True
        centroids = centroids.copy()
        centroids[empties[0]] = coords[far]
        labels, d2 = _nearest(coords, centroids)


def _drop_empty(centroids, labels):
    counts = np.bincount(labels, minlength=centroids.shape[0])
    keep = np.flatnonzero(counts > 0)
    remap = {int(old): new for new, old in enumerate(keep)}
    return centroids[keep], np.array([remap[int(l)] for l in labels])


def _kmeanspp(coords: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = coords.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = ((coords[:, None, :] - coords[chosen][None, :, :]) ** 2).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            break
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return coords[chosen].copy()


def _lloyd(coords: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float):
    """Run Lloyd iterations; returns (centroids, labels, inertia_trace)."""
    labels, d2 = _nearest(coords, centroids)
    centroids, labels, d2, stuck = _fix_empty(coords, centroids, labels, d2)
    trace = [float(d2[np.arange(coords.shape[0]), labels].sum())]
    if stuck:
        centroids, labels = _drop_empty(centroids, labels)
        return centroids, labels, trace
    for _ in range(max_iter):
        new_centroids = np.stack([coords[labels == j].mean(axis=0)
                                  for j in range(centroids.shape[0])])
        movement = np.linalg.norm(new_centroids - centroids, axis=1).max()
        labels, d2 = _nearest(coords, new_centroids)
        new_centroids, labels, d2, stuck = _fix_empty(coords, new_centroids, labels, d2)
        trace.append(float(d2[np.arange(coords.shape[0]), labels].sum()))
        centroids = new_centroids
        if stuck:
            centroids, labels = _drop_empty(centroids, labels)
            break
        if movement < tol:
            break
    return centroids, labels, trace


def kmeans(points: list[FeaturePoint], k: int, seed,
           max_iter: int = 100, tol: float = 1e-6) -> ClusterModel:
    """K-means++ seeded Lloyd clustering; deterministic given (points, k, seed).

    When there are fewer distinct coordinate vectors than k, the effective
    cluster count is lowered so that no returned cluster is empty.
    """
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    coords = np.stack([p.coords for p in points])
    k_eff = min(k, np.unique(coords, axis=0).shape[0])
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(coords, k_eff, rng)
    centroids, labels, trace = _lloyd(coords, centroids, max_iter, tol)
    assignments = {p.client_id: int(l) for p, l in zip(points, labels)}
    return ClusterModel(centroids=centroids, assignments=assignments, inertia=trace[-1])
