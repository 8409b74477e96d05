"""Server-side aggregation rules.

The cluster-guided weighted rule plus seven baselines: FedAvg, coordinate
median, trimmed mean, Krum, geometric median (Weiszfeld), pruned geometric
median (AutoGM-style), and majority-cluster averaging. All rules consume a
list of ClientUpdate and return one flat parameter vector; tie-breaks go to
the lowest client id so results are permutation-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import FeaturePoint, kmeans

FEDAVG = "fedavg"
COORD_MEDIAN = "coord-median"
TRIMMED_MEAN = "trimmed-mean"
KRUM = "krum"
GEOMED = "geomed"
AUTOGM = "autogm"
CLUSTERED_AVG = "clustered-avg"
CLUSTERGUARD = "clusterguard"

AGGREGATOR_NAMES = (FEDAVG, COORD_MEDIAN, TRIMMED_MEAN, KRUM, GEOMED, AUTOGM,
                    CLUSTERED_AVG, CLUSTERGUARD)


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: np.ndarray
    local_size: int

    def __post_init__(self):
        params = np.asarray(self.params, dtype=np.float64)
        if params.ndim != 1:
            raise ValueError(f"update params must be 1-D, got ndim={params.ndim}")
        if not np.isfinite(params).all():
            raise ValueError(f"client {self.client_id} submitted non-finite parameters")
        if self.local_size < 1:
            raise ValueError(f"client {self.client_id} has local_size {self.local_size}")
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class AggregatorKind:
    """Parsed aggregator selector: a name plus its rule-specific parameters."""

    name: str
    params: dict = field(default_factory=dict)

    def __str__(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ":".join(f"{v:g}" if isinstance(v, float) else str(v)
                                          for v in self.params.values())


def _stack(updates: list[ClientUpdate]) -> np.ndarray:
    if not updates:
        raise ValueError("aggregation needs at least one client update")
    lengths = {u.params.shape[0] for u in updates}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent update lengths in round: {sorted(lengths)}")
    return np.stack([u.params for u in updates])


def fedavg(updates: list[ClientUpdate]) -> np.ndarray:
    """Dataset-size weighted mean of client parameters."""
    stacked = _stack(updates)
    sizes = np.array([u.local_size for u in updates], dtype=np.float64)
    return (sizes[:, None] * stacked).sum(axis=0) / sizes.sum()


def coord_median(updates: list[ClientUpdate]) -> np.ndarray:
    """Per-coordinate median (mean of the two middles for even n)."""
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates: list[ClientUpdate], beta: float = 0.2) -> np.ndarray:
    """Per coordinate, drop the floor(beta*n) smallest and largest, average the rest."""
    stacked = _stack(updates)
    n = stacked.shape[0]
    m = int(math.floor(beta * n))
    if 2 * m >= n:
        raise ValueError(f"trim count {m} per side leaves nothing from {n} updates")
    ordered = np.sort(stacked, axis=0)
    return ordered[m:n - m].mean(axis=0)


def krum(updates: list[ClientUpdate], f: int) -> np.ndarray:
    """Return the update with minimal summed squared distance to its n-f-2 nearest peers.

    Mechanically the score needs at least one neighbor, so n >= f+3 is
    enforced here; the Byzantine guarantee additionally wants 2f+2 < n, which
    the orchestrator's default f = ceil(0.2*n) satisfies.
    """
    stacked = _stack(updates)
    n = stacked.shape[0]
    if f < 0:
        raise ValueError(f"f must be nonnegative, got {f}")
    if n < f + 3:
        raise ValueError(f"krum needs n >= f+3 updates, got n={n} with f={f}")
    diffs = stacked[:, None, :] - stacked[None, :, :]
    d2 = (diffs ** 2).sum(axis=2)
    closest = n - f - 2
    best = None
    for i in range(n):
        others = np.delete(d2[i], i)
        score = float(np.sort(others)[:closest].sum())
        key = (score, updates[i].client_id)
        if best is None or key < best[0]:
            best = (key, i)
    return stacked[best[1]].copy()


def _weiszfeld(stacked: np.ndarray, tol: float, max_iter: int):
    """Weiszfeld iterations from the coordinate-wise mean; returns (point, objective trace).

    An iterate that lands on a data point (distance < 1e-12) is nudged by 1e-9
    in the first coordinate so the weights stay finite.
    """
    x = stacked.mean(axis=0)
    trace = [float(np.linalg.norm(stacked - x, axis=1).sum())]
    for _ in range(max_iter):
        d = np.linalg.norm(stacked - x, axis=1)
        if (d < 1e-12).any():
            x = x.copy()
            x[0] += 1e-9
            d = np.linalg.norm(stacked - x, axis=1)
        w = 1.0 / d
        new_x = (w[:, None] * stacked).sum(axis=0) / w.sum()
        trace.append(float(np.linalg.norm(stacked - new_x, axis=1).sum()))
        step = np.linalg.norm(new_x - x)
        x = new_x
        if step < tol:
            break
    return x, trace


def geometric_median(updates: list[ClientUpdate], tol: float = 1e-6,
                     max_iter: int = 100) -> np.ndarray:
    """Weiszfeld fixed point of the sum-of-distances objective."""
    point, _ = _weiszfeld(_stack(updates), tol, max_iter)
    return point


def auto_gm(updates: list[ClientUpdate], tol: float = 1e-6, max_iter: int = 100,
            z: float = 3.0) -> np.ndarray:
    """One-pass pruned geometric median.

    Updates farther than z times the median distance from the geometric
    median are discarded and the median is recomputed on the survivors.
    """
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    stacked = _stack(updates)
    g, _ = _weiszfeld(stacked, tol, max_iter)
    dist = np.linalg.norm(stacked - g, axis=1)
    keep = dist <= z * np.median(dist)
    if not keep.any():
        return g
    survivors, _ = _weiszfeld(stacked[keep], tol, max_iter)
    return survivors


def clustered_avg(updates: list[ClientUpdate], seed=0) -> np.ndarray:
    """Two-means the update vectors and FedAvg the larger cluster.

    Size ties go to the cluster containing the lowest client id. Updates are
    sorted by client id first: k-means++ draws point indices, so a canonical
    order is what makes the rule permutation-invariant.
    """
    if len(updates) < 2:
        return _stack(updates)[0].copy()
    updates = sorted(updates, key=lambda u: u.client_id)
    points = [FeaturePoint(u.client_id, u.params) for u in updates]
    model = kmeans(points, k=2, seed=seed)
    members: dict[int, list[ClientUpdate]] = {}
    for u in updates:
        members.setdefault(model.assignments[u.client_id], []).append(u)
    best = max(members.values(),
               key=lambda us: (len(us), -min(u.client_id for u in us)))
    return fedavg(best)


def clusterguard_aggregate(w_t: np.ndarray, updates: list[ClientUpdate],
                           weights) -> np.ndarray:
    """Confidence-weighted aggregation: w_t + sum_k weight_k * (w_k - w_t).

    Because the weights sum to one this equals the plain convex combination
    of the client models.
    """
    weight_map = getattr(weights, "weights", weights)
    stacked = _stack(updates)
    ids = [u.client_id for u in updates]
    if set(weight_map) != set(ids):
        raise ValueError(
            f"weights cover clients {sorted(weight_map)} but updates are {sorted(ids)}"
        )
    w = np.array([weight_map[i] for i in ids], dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    w_t = np.asarray(w_t, dtype=np.float64)
    if w_t.shape != stacked.shape[1:]:
        raise ValueError(f"global params shape {w_t.shape} != update shape {stacked.shape[1:]}")
    return w_t + (w[:, None] * (stacked - w_t)).sum(axis=0)


def parse_aggregator(text: str) -> AggregatorKind:
    """Parse the grammar name[:param[:param...]], e.g. trimmed-mean:0.2 or krum:2."""
    parts = text.strip().split(":")
    name = parts[0]
    args = parts[1:]
    try:
        if name in (FEDAVG, COORD_MEDIAN, CLUSTERED_AVG, CLUSTERGUARD):
            if args:
                raise ValueError(f"{name} takes no parameters")
            return AggregatorKind(name)
        if name == TRIMMED_MEAN:
            beta = float(args[0]) if args else 0.2
            if not 0.0 <= beta < 0.5:
                raise ValueError(f"beta must be in [0, 0.5), got {beta}")
            return AggregatorKind(name, {"beta": beta})
        if name == KRUM:
            f = int(args[0]) if args else None
            if f is not None and f < 0:
                raise ValueError(f"f must be nonnegative, got {f}")
            return AggregatorKind(name, {} if f is None else {"f": f})
        if name == GEOMED:
            tol = float(args[0]) if len(args) > 0 else 1e-6
            max_iter = int(args[1]) if len(args) > 1 else 100
            return AggregatorKind(name, {"tol": tol, "max_iter": max_iter})
        if name == AUTOGM:
            tol = float(args[0]) if len(args) > 0 else 1e-6
            max_iter = int(args[1]) if len(args) > 1 else 100
            z = float(args[2]) if len(args) > 2 else 3.0
            if z <= 0:
                raise ValueError(f"z must be positive, got {z}")
            return AggregatorKind(name, {"tol": tol, "max_iter": max_iter, "z": z})
    except (ValueError, IndexError) as exc:
        raise ValueError(f"bad aggregator spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown aggregator {name!r} in {text!r}")


def apply_baseline(kind: AggregatorKind, updates: list[ClientUpdate], seed=0) -> np.ndarray:
    """Dispatch a non-clusterguard aggregator.

    Krum's f defaults to ceil(0.2 * n) when unspecified, matching the 20%
    threat level.
    """
    if kind.name == FEDAVG:
        return fedavg(updates)
    if kind.name == COORD_MEDIAN:
        return coord_median(updates)
    if kind.name == TRIMMED_MEAN:
        return trimmed_mean(updates, **kind.params)
    if kind.name == KRUM:
        f = kind.params.get("f")
        if f is None:
            f = int(math.ceil(0.2 * len(updates)))
        return krum(updates, f)
    if kind.name == GEOMED:
        return geometric_median(updates, **kind.params)
    if kind.name == AUTOGM:
        return auto_gm(updates, **kind.params)
    if kind.name == CLUSTERED_AVG:
        return clustered_avg(updates, seed=seed)
    raise ValueError(f"{kind.name} is not a baseline aggregator")
