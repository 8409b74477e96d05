"""Per-client dissimilarity between global-model and client-model predictions.

The distance is 1-D Earth Mover's Distance over class indices with ground
distance |i - j|, which over ordered bins reduces to the L1 distance between
the two CDFs.
"""

from __future__ import annotations

import numpy as np

from .model import ModelSpec, forward

PER_SAMPLE = "per-sample"
POOLED = "pooled"


def emd_1d(p, q) -> float:
    """Wasserstein-1 between two histograms on the ordered bins 0..C-1."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or p.shape != q.shape:
        raise ValueError(f"emd_1d needs two equal-length vectors, got {p.shape} and {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("emd_1d requires nonnegative entries")
    sp, sq = p.sum(), q.sum()
    if abs(sp - 1.0) > 1e-6 or abs(sq - 1.0) > 1e-6:
        raise ValueError(f"inputs must each sum to 1 within 1e-6, got {sp} and {sq}")
    diff = p / sp - q / sq
    return float(np.abs(np.cumsum(diff)).sum())


def dissimilarity_score(spec: ModelSpec, global_params: np.ndarray,
                        client_params: np.ndarray, eval_batch,
                        mode: str = PER_SAMPLE) -> float:
    """Mean per-sample EMD between the two models' prediction rows.

    `pooled` instead compares the two mean prediction histograms; kept as an
    ablation switch.
    """
    features = eval_batch.features if hasattr(eval_batch, "features") else np.asarray(eval_batch)
    if features.shape[0] < 1:
        raise ValueError("eval batch must be nonempty")
    probs_global = forward(spec, global_params, features)
    probs_client = forward(spec, client_params, features)
    if mode == PER_SAMPLE:
        # rows from forward are normalized, so the CDF formula applies directly
        per_row = np.abs(np.cumsum(probs_global - probs_client, axis=1)).sum(axis=1)
        return float(per_row.mean())
    if mode == POOLED:
        return emd_1d(probs_global.mean(axis=0), probs_client.mean(axis=0))
    raise ValueError(f"unknown dissimilarity mode {mode!r}")
