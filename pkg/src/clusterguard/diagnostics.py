"""Numerical checks of the convergence-analysis quantities.

Everything here is observational: gradient dissimilarity across clients, the
derived bound constant U, a probe-based Lipschitz lower bound M, the
per-round loss-change bound constants A1/A2/A3, and a PL-constant estimate.
Running these never touches model or aggregation state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Batch, ModelSpec, gradient


class ZeroGradientError(ValueError):
    """U is undefined when the global gradient vanishes; callers report it as absent."""


@dataclass(frozen=True)
class DiagnosticsReport:
    round: int
    B_squared: float
    grad_norm_sq: float
    U: float | None
    M_estimate: float
    gamma: float
    A1: float
    A2: float
    A3: float
    lhs_loss_delta: float
    rhs_bound: float
    mu_estimate: float | None = None


def gradient_dissimilarity(spec: ModelSpec, params: np.ndarray,
                           client_batches: list[Batch],
                           client_weights) -> tuple[float, float]:
    """Weighted gradient spread across clients.

    With p_k = |D_k|/n and grad_k the full-batch client gradients, returns
    (sum_k p_k * ||grad_k - grad||^2, ||grad||^2) where grad = sum_k p_k grad_k.
    """
    p = np.asarray(client_weights, dtype=np.float64)
    if len(client_batches) != p.shape[0]:
        raise ValueError(
            f"{len(client_batches)} batches but {p.shape[0]} weights"
        )
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"client weights must sum to 1 within 1e-9, got {p.sum()}")
    grads = np.stack([gradient(spec, params, b) for b in client_batches])
    mean_grad = (p[:, None] * grads).sum(axis=0)
    b_sq = float((p * ((grads - mean_grad) ** 2).sum(axis=1)).sum())
    return b_sq, float((mean_grad ** 2).sum())


def compute_U(b_squared: float, grad_norm_sq: float) -> float:
    """U = sqrt(1 + B^2 / ||grad||^2); always >= 1."""
    if grad_norm_sq <= 0:
        raise ZeroGradientError("U is undefined for a zero global gradient")
    return float(np.sqrt(1.0 + b_squared / grad_norm_sq))


def probe_lipschitz(grad_fn, params: np.ndarray, num_probes: int, radius: float,
                    rng: np.random.Generator) -> float:
    """Max over random unit directions of ||grad(theta + r*d) - grad(theta)|| / r.

    A lower bound on the gradient's Lipschitz constant around theta, for any
    gradient field grad_fn.
    """
    if num_probes < 1:
        raise ValueError(f"num_probes must be >= 1, got {num_probes}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    params = np.asarray(params, dtype=np.float64)
    base = grad_fn(params)
    best = 0.0
    for _ in range(num_probes):
        direction = rng.standard_normal(params.shape[0])
        direction /= np.linalg.norm(direction)
        probed = grad_fn(params + radius * direction)
        best = max(best, float(np.linalg.norm(probed - base)) / radius)
    return best


def estimate_lipschitz(spec: ModelSpec, params: np.ndarray, batch: Batch,
                       num_probes: int, radius: float,
                       rng: np.random.Generator) -> float:
    """Probe-based lower bound on the model loss gradient's Lipschitz constant.

    Underestimates the true constant and is reported as such.
    """
    return probe_lipschitz(lambda p: gradient(spec, p, batch), params,
                           num_probes, radius, rng)


def lemma_constants(U: float, M_estimate: float, gamma: float, eta_t: float,
                    q_c: float) -> tuple[float, float, float]:
    """The three per-round bound constants.

    A1 = U*gamma/2 + U*eta^2/(2*gamma*q_c^2) + M*eta^2/(2*q_c^2)
    A2 = (eta^2/q_c) * (U/gamma + M)
    A3 = (eta^2/2) * (U/gamma + M)
    """
    a1 = U * gamma / 2.0 + U * eta_t ** 2 / (2.0 * gamma * q_c ** 2) \
        + M_estimate * eta_t ** 2 / (2.0 * q_c ** 2)
    a2 = (eta_t ** 2 / q_c) * (U / gamma + M_estimate)
    a3 = (eta_t ** 2 / 2.0) * (U / gamma + M_estimate)
    return a1, a2, a3


def lemma2_bound(U: float, M_estimate: float, gamma: float, eta_t: float,
                 q_c: float, grad_norm_sq: float,
                 sigma: float = 0.0) -> tuple[float, float, float, float]:
    """Per-round loss-change bound: A1*||grad||^2 plus noise terms.

    The server noise is configured through a single variance scalar sigma, so
    the noise cross term is scored as A2*||grad||*sigma and the pure noise
    term as A3*sigma^2; both vanish at the default sigma = 0.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not 0.0 < q_c <= 1.0:
        raise ValueError(f"q_c must be in (0,1], got {q_c}")
    if eta_t <= 0:
        raise ValueError(f"eta_t must be positive, got {eta_t}")
    a1, a2, a3 = lemma_constants(U, M_estimate, gamma, eta_t, q_c)
    rhs = a1 * grad_norm_sq
    if sigma != 0.0:
        rhs += a2 * np.sqrt(grad_norm_sq) * sigma + a3 * sigma ** 2
    return a1, a2, a3, float(rhs)


def check_round_bound(report: DiagnosticsReport) -> bool:
    """True iff the measured loss change respects the bound (1e-9 slack)."""
    return report.lhs_loss_delta <= report.rhs_bound + 1e-9


def estimate_pl_constant(loss_trace, grad_norm_trace, loss_star: float) -> float:
    """Smallest observed ratio (1/2)||grad||^2 / (L - L* + 1e-12) along a trace."""
    losses = np.asarray(loss_trace, dtype=np.float64)
    grad_norms = np.asarray(grad_norm_trace, dtype=np.float64)
    if losses.shape != grad_norms.shape or losses.ndim != 1:
        raise ValueError("loss and gradient-norm traces must be aligned 1-D sequences")
    if losses.size == 0:
        raise ValueError("traces must be nonempty")
    if loss_star > losses.min() + 1e-12:
        raise ValueError(
            f"loss_star {loss_star} exceeds the trace minimum {losses.min()}"
        )
    ratios = 0.5 * grad_norms ** 2 / (losses - loss_star + 1e-12)
    return float(ratios.min())
