import numpy as np
import pytest

from winklercontact.iteration import abstract_iterate, estimate_theorem3


def scalar(a, g, y, gamma, max_k=5000):
    return abstract_iterate(lambda u: a * u, [y], g, gamma, [0.0], tol=1e-13, max_k=max_k)


class TestScalar:
    @pytest.mark.parametrize("factor", [0.1, 0.5, 1.0, 1.5, 1.9])
    def test_converges_inside_window(self, factor):
        a, g, y = 3.0, 2.0, 1.5
        res = scalar(a, g, y, factor * g / a)
        assert res.converged
        assert res.solution[0] == pytest.approx(y / a, rel=1e-10)

    @pytest.mark.parametrize("factor", [2.2, 3.0])
    def test_diverges_outside_window(self, factor):
        res = scalar(3.0, 2.0, 1.5, factor * 2.0 / 3.0)
        assert not res.converged and res.diverged

    def test_optimal_gamma_one_step(self):
        res = scalar(3.0, 2.0, 1.5, 2.0 / 3.0)
        assert res.iterates[1][0] == pytest.approx(0.5, rel=1e-15)


class TestVector:
    def test_newton_on_linear_problem(self, rng):
        M = rng.standard_normal((6, 6))
        A = M.T @ M + np.eye(6)
        y = rng.standard_normal(6)
        res = abstract_iterate(lambda u: A @ u, y, A, 1.0, np.zeros(6), tol=1e-12)
        np.testing.assert_allclose(res.iterates[1], np.linalg.solve(A, y), rtol=1e-10)

    def test_exact_start_is_constant(self, rng):
        A = np.diag([1.0, 2.0, 3.0])
        y = np.array([1.0, 1.0, 1.0])
        u = np.linalg.solve(A, y)
        res = abstract_iterate(lambda v: A @ v, y, np.eye(3), 0.3, u, tol=0.0, max_k=5)
        for it in res.iterates:
            np.testing.assert_array_equal(it, u)

    def test_sequence_and_callable_forms(self):
        A = np.diag([2.0, 4.0])
        y = np.array([2.0, 4.0])
        seq = abstract_iterate(lambda v: A @ v, y, [np.eye(2) * 8, A], [0.5, 1.0], np.zeros(2))
        call = abstract_iterate(lambda v: A @ v, y, lambda k, u: np.eye(2) * 8 if k == 0 else A,
                                [0.5, 1.0], np.zeros(2))
        np.testing.assert_array_equal(seq.solution, call.solution)
        np.testing.assert_allclose(seq.solution, [1.0, 1.0], rtol=1e-14)

    def test_non_spd_form_rejected(self):
        with pytest.raises(ValueError, match="positive definite"):
            abstract_iterate(lambda v: v, [1.0, 1.0], np.diag([1.0, -1.0]), 1.0, np.zeros(2))


class TestConvergenceWindow:
    def test_scalar_gamma_star(self):
        a, g = 3.0, 2.0
        est = estimate_theorem3(lambda u: a * u, [np.array([[g]])], dim=1, probes=5, rng=0)
        assert est.gamma_star == pytest.approx(g / a, rel=1e-12)
        assert est.window == pytest.approx((0.0, 2 * g / a))
        assert not est.violations

    def test_spd_matrix_bounds(self, rng):
        M = rng.standard_normal((5, 5))
        A = M.T @ M + np.eye(5)
        w = np.linalg.eigvalsh(A)
        est = estimate_theorem3(lambda u: A @ u, [A], dim=5, probes=50, rng=1)
        assert w[0] * (1 - 1e-12) <= est.b_phi <= w[-1] * (1 + 1e-12)
        assert est.d_phi <= w[-1] * (1 + 1e-12)
        assert est.b_g == pytest.approx(w[0]) and est.m_g == pytest.approx(w[-1])
        assert est.gamma_star <= w[-1] * w[0] / w[0] ** 2 + 1e-12

    def test_single_probe_is_that_quotient(self):
        A = np.diag([1.0, 3.0])
        rng = np.random.default_rng(7)
        u, v, w = (rng.standard_normal(2) for _ in range(3))
        est = estimate_theorem3(lambda x: A @ x, [np.eye(2)], dim=2, probes=1, rng=7)
        assert est.b_phi == pytest.approx(v @ A @ v / (v @ v), rel=1e-12)
        assert est.d_phi == pytest.approx(np.linalg.norm(A @ w) / np.linalg.norm(w), rel=1e-12)

    def test_non_monotone_flagged(self):
        est = estimate_theorem3(lambda u: -u, [np.eye(2)], dim=2, probes=3, rng=0)
        assert est.violations
