import numpy as np
import pytest

from clusterguard.diagnostics import (
    DiagnosticsReport, ZeroGradientError, check_round_bound, compute_U,
    estimate_lipschitz, estimate_pl_constant, gradient_dissimilarity,
    lemma2_bound, probe_lipschitz,
)
from clusterguard.model import SOFTMAX_REGRESSION, Batch, ModelSpec, gradient


def random_clients(rng, spec, num_clients):
    batches, sizes = [], []
    for _ in range(num_clients):
        n = int(rng.integers(3, 10))
        sizes.append(n)
        batches.append(Batch(rng.normal(size=(n, spec.input_dim)),
                             rng.integers(0, spec.num_classes, size=n)))
    p = np.array(sizes, dtype=np.float64)
    return batches, p / p.sum()


class TestGradientDissimilarity:
    def test_single_client_has_zero_spread(self):
        spec = ModelSpec(SOFTMAX_REGRESSION, 3, 2)
        rng = np.random.default_rng(0)
        batch = Batch(rng.normal(size=(5, 3)), rng.integers(0, 2, size=5))
        b_sq, g_sq = gradient_dissimilarity(spec, np.zeros(spec.parameter_count()),
                                            [batch], [1.0])
        assert b_sq == 0.0
        assert g_sq > 0

    def test_identical_client_data(self):
        spec = ModelSpec(SOFTMAX_REGRESSION, 2, 3)
        rng = np.random.default_rng(1)
        batch = Batch(rng.normal(size=(6, 2)), rng.integers(0, 3, size=6))
        params = rng.normal(size=spec.parameter_count())
        b_sq, _ = gradient_dissimilarity(spec, params, [batch] * 4,
                                         [0.25] * 4)
        assert b_sq <= 1e-18

    def test_variance_decomposition_identity(self):
        # oracle: sum_k p_k ||g_k||^2 == ||g||^2 + B^2, the algebra behind U
        spec = ModelSpec(SOFTMAX_REGRESSION, 4, 3)
        rng = np.random.default_rng(2)
        for _ in range(50):
            params = rng.normal(0, 0.5, size=spec.parameter_count())
            batches, p = random_clients(rng, spec, int(rng.integers(2, 6)))
            b_sq, g_sq = gradient_dissimilarity(spec, params, batches, p)
            second_moment = sum(pk * np.dot(g, g) for pk, g in zip(
                p, [gradient(spec, params, b) for b in batches]))
            assert second_moment == pytest.approx(g_sq + b_sq, abs=1e-8)

    def test_weight_validation(self):
        spec = ModelSpec(SOFTMAX_REGRESSION, 2, 2)
        batch = Batch(np.zeros((2, 2)), np.array([0, 1]))
        with pytest.raises(ValueError):
            gradient_dissimilarity(spec, np.zeros(6), [batch, batch], [0.6, 0.6])
        with pytest.raises(ValueError):
            gradient_dissimilarity(spec, np.zeros(6), [batch], [0.5, 0.5])


class TestComputeU:
    def test_zero_spread_gives_one(self):
        assert compute_U(0.0, 2.5) == 1.0

    def test_three_to_one_ratio_gives_two(self):
        assert compute_U(3.0, 1.0) == pytest.approx(2.0)

    def test_monotone_in_spread(self):
        values = [compute_U(b, 1.0) for b in (0.0, 0.5, 1.0, 4.0)]
        assert values == sorted(values)
        assert all(v >= 1.0 for v in values)

    def test_zero_gradient_is_an_error(self):
        with pytest.raises(ZeroGradientError):
            compute_U(1.0, 0.0)


class TestEstimateLipschitz:
    def test_quadratic_matches_hessian_norm(self):
        # linear model, squared error: gradient (2/n) X^T (X theta - y) has the
        # constant Hessian (2/n) X^T X whose spectral norm is the exact constant
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        hessian = 2.0 * x.T @ x / len(y)
        spectral = float(np.linalg.eigvalsh(hessian).max())

        def grad_fn(theta):
            return 2.0 * x.T @ (x @ theta - y) / len(y)

        estimate = probe_lipschitz(grad_fn, np.zeros(2), num_probes=200,
                                   radius=0.1, rng=np.random.default_rng(4))
        assert estimate <= spectral + 1e-9
        assert estimate == pytest.approx(spectral, rel=0.05)

    def test_deterministic_given_rng(self):
        spec = ModelSpec(SOFTMAX_REGRESSION, 3, 2)
        rng = np.random.default_rng(5)
        params = rng.normal(size=spec.parameter_count())
        batch = Batch(rng.normal(size=(8, 3)), rng.integers(0, 2, size=8))
        a = estimate_lipschitz(spec, params, batch, 5, 0.5, np.random.default_rng(9))
        b = estimate_lipschitz(spec, params, batch, 5, 0.5, np.random.default_rng(9))
        assert a == b

    def test_nonnegative(self):
        spec = ModelSpec(SOFTMAX_REGRESSION, 2, 2)
        batch = Batch(np.zeros((2, 2)), np.array([0, 1]))
        est = estimate_lipschitz(spec, np.zeros(6), batch, 3, 1.0,
                                 np.random.default_rng(0))
        assert est >= 0.0


class TestLemma2Bound:
    def test_zero_sigma_reduces_to_gradient_term(self):
        a1, a2, a3, rhs = lemma2_bound(U=1.5, M_estimate=2.0, gamma=1.0,
                                       eta_t=0.1, q_c=0.5, grad_norm_sq=4.0)
        assert rhs == pytest.approx(a1 * 4.0)
        assert a2 > 0 and a3 > 0  # constants exist even when unused

    def test_hand_computed_a1(self):
        a1, _, _, _ = lemma2_bound(U=1.0, M_estimate=0.0, gamma=1.0, eta_t=0.1,
                                   q_c=1.0, grad_norm_sq=1.0)
        assert a1 == pytest.approx(0.505)

    def test_a2_a3_relation(self):
        for q_c in (0.25, 0.5, 1.0):
            _, a2, a3, _ = lemma2_bound(U=1.7, M_estimate=3.0, gamma=2.0,
                                        eta_t=0.05, q_c=q_c, grad_norm_sq=1.0)
            assert a2 == pytest.approx(2.0 * a3 / q_c)

    def test_sigma_terms_added(self):
        _, a2, a3, rhs0 = lemma2_bound(1.0, 1.0, 1.0, 0.1, 1.0, 4.0, sigma=0.0)
        a1, _, _, rhs1 = lemma2_bound(1.0, 1.0, 1.0, 0.1, 1.0, 4.0, sigma=0.5)
        assert rhs1 == pytest.approx(a1 * 4.0 + a2 * 2.0 * 0.5 + a3 * 0.25)
        assert rhs1 > rhs0

    def test_validation(self):
        with pytest.raises(ValueError):
            lemma2_bound(1.0, 1.0, 0.0, 0.1, 1.0, 1.0)
        with pytest.raises(ValueError):
            lemma2_bound(1.0, 1.0, 1.0, 0.1, 1.5, 1.0)
        with pytest.raises(ValueError):
            lemma2_bound(1.0, 1.0, 1.0, 0.0, 1.0, 1.0)


def report_with(lhs, rhs):
    return DiagnosticsReport(round=1, B_squared=0.0, grad_norm_sq=1.0, U=1.0,
                             M_estimate=0.0, gamma=1.0, A1=0.5, A2=0.0, A3=0.0,
                             lhs_loss_delta=lhs, rhs_bound=rhs)


class TestCheckRoundBound:
    def test_loss_decrease_always_passes(self):
        assert check_round_bound(report_with(-0.3, 0.7))
        assert check_round_bound(report_with(-1e-12, 0.0))

    def test_violated_bound(self):
        assert not check_round_bound(report_with(1.0, 0.5))

    def test_slack(self):
        assert check_round_bound(report_with(0.5 + 5e-10, 0.5))


class TestEstimatePlConstant:
    def test_quadratic_recovers_curvature(self):
        a = 3.7
        theta_star = 1.0
        thetas = np.linspace(-2.0, 0.8, 40)
        losses = 0.5 * a * (thetas - theta_star) ** 2
        grad_norms = np.abs(a * (thetas - theta_star))
        mu = estimate_pl_constant(losses, grad_norms, loss_star=0.0)
        assert mu == pytest.approx(a, rel=0.01)

    def test_at_optimum_guard_keeps_ratio_finite(self):
        mu = estimate_pl_constant([0.0], [0.0], loss_star=0.0)
        assert np.isfinite(mu)
        assert mu == 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(6)
        losses = rng.random(10) + 1.0
        grads = rng.random(10)
        assert estimate_pl_constant(losses, grads, loss_star=0.5) >= 0.0

    def test_loss_star_above_trace_rejected(self):
        with pytest.raises(ValueError):
            estimate_pl_constant([1.0, 2.0], [1.0, 1.0], loss_star=1.5)
