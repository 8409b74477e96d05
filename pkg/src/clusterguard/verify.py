"""Independent oracle suites backing the `verify` command and the acceptance tests.

Each suite checks an implementation against a second, independent computation:
histogram EMD against a greedy optimal-transport solve, Krum against plain-loop
exhaustive scoring, the Weiszfeld output against a brute-force grid search,
analytic gradients against central finite differences, and the gradient
dissimilarity quantities against the variance-decomposition identity.

The `fault` hook perturbs one named suite's computed values; it exists so the
failure path of the verify command stays testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics, dissimilarity, model
from .aggregation import ClientUpdate, geometric_median, krum
from .model import Batch, ModelSpec


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    passed: bool
    detail: str = ""


def nw_transport_cost(p: np.ndarray, q: np.ndarray) -> float:
    """Exact minimum-cost transport between histograms on ordered bins.

    Ground distance |i - j|; the north-west corner fill is optimal for this
    1-D cost, so this is an independent oracle for the CDF formula.
    """
    p = np.asarray(p, dtype=np.float64).copy()
    q = np.asarray(q, dtype=np.float64).copy()
    p /= p.sum()
    q /= q.sum()
    i = j = 0
    cost = 0.0
    eps = 1e-15
    while i < p.size and j < q.size:
        moved = min(p[i], q[j])
        cost += moved * abs(i - j)
        p[i] -= moved
        q[j] -= moved
        if p[i] <= eps:
            i += 1
        if q[j] <= eps:
            j += 1
    return cost


def _random_histogram(rng: np.random.Generator, bins: int) -> np.ndarray:
    raw = rng.random(bins)
    # occasionally zero out a bin to exercise degenerate mass placements
    if rng.random() < 0.3:
        raw[rng.integers(bins)] = 0.0
    if raw.sum() == 0:
        raw[0] = 1.0
    return raw / raw.sum()


def suite_emd(num_cases: int = 1000, seed: int = 20240601, fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(num_cases):
        bins = int(rng.integers(2, 6))
        p = _random_histogram(rng, bins)
        q = _random_histogram(rng, bins)
        got = dissimilarity.emd_1d(p, q)
        if fault:
            got += 1e-6
        err = abs(got - nw_transport_cost(p, q))
        worst = max(worst, err)
        if err > 1e-9:
            return SuiteResult("emd_1d", num_cases, False,
                               f"case {case}: |emd - transport| = {err:.3e} (p={p}, q={q})")
    return SuiteResult("emd_1d", num_cases, True, f"max |emd - transport| = {worst:.3e}")


def krum_exhaustive(vectors: np.ndarray, ids: list[int], f: int) -> int:
    """Krum by definition, with plain loops: returns the winning client id."""
    n = len(vectors)
    best_id = None
    best_score = None
    for i in range(n):
        dists = []
        for j in range(n):
            if j == i:
                continue
            delta = vectors[i] - vectors[j]
            dists.append(float(np.dot(delta, delta)))
        dists.sort()
        score = sum(dists[: n - f - 2])
        if best_score is None or score < best_score \
                or (score == best_score and ids[i] < best_id):
            best_score = score
            best_id = ids[i]
    return best_id


def suite_krum(num_cases: int = 500, seed: int = 20240602, fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for case in range(num_cases):
        n = int(rng.integers(3, 7))
        f = int(rng.integers(0, n - 2))  # any f with at least one scored neighbor
        dim = int(rng.integers(1, 5))
        vectors = rng.normal(0.0, 1.0, size=(n, dim))
        if rng.random() < 0.25 and n >= 2:
            vectors[1] = vectors[0]  # force exact ties sometimes
        ids = list(rng.permutation(n * 2)[:n])
        updates = [ClientUpdate(int(ids[i]), vectors[i], 1) for i in range(n)]
        got = krum(updates, f)
        expected_id = krum_exhaustive(vectors, [int(i) for i in ids], f)
        if fault:
            got = got + 1e-6
        expected_vec = vectors[[int(i) for i in ids].index(expected_id)]
        if not np.array_equal(got, expected_vec):
            return SuiteResult("krum", num_cases, False,
                               f"case {case}: picked {got}, oracle wants client "
                               f"{expected_id} = {expected_vec}")
    return SuiteResult("krum", num_cases, True, "all selections match exhaustive scoring")


def grid_min_objective(points: np.ndarray, pitch: float = 1e-3) -> float:
    """Brute-force min of sum-of-distances over a pitch-spaced grid on the bbox."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    xs = np.arange(lo[0], hi[0] + pitch, pitch)
    ys = np.arange(lo[1], hi[1] + pitch, pitch)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    total = np.zeros(grid.shape[0])
    for pt in points:
        total += np.linalg.norm(grid - pt, axis=1)
    return float(total.min())


def suite_weiszfeld(num_cases: int = 100, seed: int = 20240603,
                    fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for case in range(num_cases):
        points = rng.random((5, 2))
        updates = [ClientUpdate(i, points[i], 1) for i in range(5)]
        median = geometric_median(updates, tol=1e-9, max_iter=500)
        objective = float(np.linalg.norm(points - median, axis=1).sum())
        if fault:
            objective += 1e-2
        gap = objective - grid_min_objective(points)
        worst = max(worst, gap)
        if gap > 1e-3:
            return SuiteResult("weiszfeld", num_cases, False,
                               f"case {case}: objective exceeds grid minimum by {gap:.3e}")
    return SuiteResult("weiszfeld", num_cases, True,
                       f"max objective excess over grid minimum = {worst:.3e}")


def finite_difference_gradient(spec: ModelSpec, params: np.ndarray, batch: Batch,
                               step: float = 1e-5) -> np.ndarray:
    """Central differences of the loss, one coordinate at a time."""
    grad = np.empty_like(params)
    for i in range(params.size):
        up = params.copy()
        down = params.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (model.loss(spec, up, batch) - model.loss(spec, down, batch)) / (2 * step)
    return grad


def _random_instance(rng: np.random.Generator):
    if rng.random() < 0.5:
        spec = ModelSpec(model.SOFTMAX_REGRESSION, int(rng.integers(2, 7)),
                         int(rng.integers(2, 5)))
    else:
        spec = ModelSpec(model.MLP, int(rng.integers(2, 6)), int(rng.integers(2, 5)),
                         hidden_dim=int(rng.integers(2, 6)))
    params = rng.normal(0.0, 0.5, size=spec.parameter_count())
    n = int(rng.integers(2, 9))
    batch = Batch(rng.normal(0.0, 1.0, size=(n, spec.input_dim)),
                  rng.integers(0, spec.num_classes, size=n))
    return spec, params, batch


def suite_gradient(num_cases: int = 100, seed: int = 20240604,
                   fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng(seed)
    for case in range(num_cases):
        spec, params, batch = _random_instance(rng)
        analytic = model.gradient(spec, params, batch)
        if fault:
            analytic = analytic + 1e-2
        numeric = finite_difference_gradient(spec, params, batch)
        if not np.allclose(analytic, numeric, rtol=1e-4, atol=1e-8):
            worst = np.abs(analytic - numeric).max()
            return SuiteResult("gradient", num_cases, False,
                               f"case {case} ({spec.kind}): max abs deviation {worst:.3e}")
    return SuiteResult("gradient", num_cases, True,
                       "analytic gradients match central differences")


def suite_variance_identity(num_cases: int = 50, seed: int = 20240605,
                            fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(num_cases):
        spec, params, _ = _random_instance(rng)
        num_clients = int(rng.integers(2, 6))
        batches = []
        sizes = []
        for _ in range(num_clients):
            n = int(rng.integers(2, 9))
            sizes.append(n)
            batches.append(Batch(rng.normal(0.0, 1.0, size=(n, spec.input_dim)),
                                 rng.integers(0, spec.num_classes, size=n)))
        p = np.array(sizes, dtype=np.float64)
        p /= p.sum()
        b_sq, g_sq = diagnostics.gradient_dissimilarity(spec, params, batches, p)
        if fault:
            b_sq += 1e-6
        grads = [model.gradient(spec, params, b) for b in batches]
        second_moment = float(sum(pk * np.dot(g, g) for pk, g in zip(p, grads)))
        err = abs(second_moment - (g_sq + b_sq))
        worst = max(worst, err)
        if err > 1e-8:
            return SuiteResult("variance-identity", num_cases, False,
                               f"case {case}: identity violated by {err:.3e}")
        if g_sq > 0 and diagnostics.compute_U(b_sq, g_sq) < 1.0:
            return SuiteResult("variance-identity", num_cases, False,
                               f"case {case}: U < 1")
    return SuiteResult("variance-identity", num_cases, True,
                       f"max identity violation = {worst:.3e}")


SUITES = {
    "emd_1d": suite_emd,
    "krum": suite_krum,
    "weiszfeld": suite_weiszfeld,
    "gradient": suite_gradient,
    "variance-identity": suite_variance_identity,
}


def run_all(fault: str | None = None) -> list[SuiteResult]:
    if fault is not None and fault not in SUITES:
        raise ValueError(f"unknown fault target {fault!r}; choose from {sorted(SUITES)}")
    return [suite(fault=(name == fault)) for name, suite in SUITES.items()]
