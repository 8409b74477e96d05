"""Reconciliation confidence scores and softmax aggregation weights.

A client's raw score is its cluster size over one plus its distance to the
cluster centroid, so clients in large clusters that sit near the center get
the most say. A softmax over the raw scores turns them into strictly
positive weights summing to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel, FeaturePoint


@dataclass(frozen=True)
class ConfidenceWeights:
    raw_scores: dict[int, float]
    weights: dict[int, float]
    temperature: float

    @classmethod
    def from_scores(cls, raw_scores: dict[int, float], temperature: float) -> "ConfidenceWeights":
        return cls(raw_scores=dict(raw_scores),
                   weights=softmax_weights(raw_scores, temperature),
                   temperature=temperature)


def confidence_scores(model: ClusterModel, points: list[FeaturePoint]) -> dict[int, float]:
    """Raw score per client: cluster_size / (1 + distance_to_centroid)."""
    sizes = model.cluster_sizes()
    scores: dict[int, float] = {}
    for point in points:
        if point.client_id not in model.assignments:
            raise LookupError(f"client {point.client_id} has no cluster assignment")
        j = model.assignments[point.client_id]
        d = float(np.linalg.norm(point.coords - model.centroids[j]))
        scores[point.client_id] = sizes[j] / (1.0 + d)
    return scores


def softmax_weights(raw_scores: dict[int, float], temperature: float) -> dict[int, float]:
    """exp(S_k / tau) normalized over clients, computed with max-subtraction."""
    if not raw_scores:
        raise ValueError("softmax_weights needs at least one score")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    ids = sorted(raw_scores)
    scores = np.array([raw_scores[i] for i in ids], dtype=np.float64)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    scaled = scores / temperature
    exp = np.exp(scaled - scaled.max())
    weights = exp / exp.sum()
    return {i: float(w) for i, w in zip(ids, weights)}
