import numpy as np
import pytest

from app.core.exceptions import AlphaOutOfRange
from app.core.metrics import log2det_pd, sum_capacity
from app.core.model import Mode
from app.core.relay import (
    ALPHA_ROUNDOFF,
    alpha_of,
    alpha_ratio,
    assemble_relay,
    capacity_allocation,
    mse_allocation,
    naive_relay_gain,
    project_weighted_budget,
    projected_gradient_norm,
    relay_capacity_objective,
    relay_geometry,
    relay_mse_objective,
    relay_power,
    rescale_to_budget,
    solve_relay,
)
from app.test.conftest import random_channels, random_precoder


def _random_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T


def _geometry(rng, n=4, direct=1.0, p=20.0):
    channels = random_channels(rng, n, n, n, direct=direct)
    f1 = random_precoder(rng, n, p)
    f2 = random_precoder(rng, n, p)
    return channels, f1, f2, relay_geometry(channels, f1, f2)


class TestRelayGeometry:
    def test_without_direct_links(self, rng):
        channels, f1, f2, geo = _geometry(rng, 3, direct=0.0)
        np.testing.assert_allclose(geo.t, np.eye(3))
        np.testing.assert_allclose(geo.k_tilde, np.zeros((3, 3)), atol=1e-15)
        assert geo.kappa == 0.0
        q = sum(h @ f @ f.conj().T @ h.conj().T for h, f in zip(channels.relay_links(), (f1, f2)))
        np.testing.assert_allclose(geo.k, q, atol=1e-12)

    def test_silent_sources(self, rng):
        channels = random_channels(rng, 2, 2, 2)
        zero = np.zeros((2, 2))
        geo = relay_geometry(channels, zero, zero)
        np.testing.assert_allclose(geo.k, zero)
        np.testing.assert_allclose(geo.t, np.eye(2))

    def test_blocks_and_decompositions(self, rng):
        channels, f1, f2, geo = _geometry(rng, 4)
        q = sum(h @ f @ f.conj().T @ h.conj().T for h, f in zip(channels.relay_links(), (f1, f2)))
        np.testing.assert_allclose(geo.k + geo.k_tilde, q, atol=1e-12 * (1 + np.abs(q).max()))
        assert np.linalg.eigvalsh(geo.t).min() >= 1 - 1e-9
        assert np.linalg.eigvalsh(geo.k_tilde).min() >= -1e-9
        assert np.linalg.eigvalsh(geo.k).min() >= -1e-9 * (1 + np.abs(q).max())
        assert geo.kappa == pytest.approx(np.real(np.trace(geo.k_tilde)))

        rebuilt_k = geo.u_k @ np.diag(geo.lambda_k) @ geo.u_k.conj().T
        assert np.linalg.norm(rebuilt_k - geo.k) <= 1e-9 * np.linalg.norm(geo.k)
        rebuilt_h = geo.u_h @ np.diag(geo.theta) @ geo.v_h.conj().T
        assert np.linalg.norm(rebuilt_h - channels.h_dr) <= 1e-9 * np.linalg.norm(channels.h_dr)
        assert np.all(np.diff(geo.lambda_k) <= 0) and np.all(np.diff(geo.theta) <= 0)

    def test_rank_deficient_forward_link_is_padded(self, rng):
        channels = random_channels(rng, 2, 4, 2)
        f = random_precoder(rng, 2, 1.0)
        geo = relay_geometry(channels, f, f)
        assert geo.theta.shape == (4,)
        np.testing.assert_array_equal(geo.theta[2:], [0.0, 0.0])


class TestAlpha:
    def test_identity_pair(self):
        assert alpha_of(np.eye(2), np.eye(2)) == pytest.approx(0.5)

    def test_orthogonal_supports(self):
        assert alpha_of(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == 0.0

    def test_degenerate_inputs(self):
        assert alpha_of(np.zeros((2, 2)), np.eye(2)) == 0.0
        assert alpha_of(np.eye(2), np.zeros((2, 2))) == 0.0

    def test_raw_ratio_in_unit_interval(self, rng):
        for _ in range(10_000):
            n = int(rng.integers(1, 5))
            g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            ratio = alpha_ratio(_random_psd(rng, n), g)
            assert -ALPHA_ROUNDOFF <= ratio <= 1.0 + ALPHA_ROUNDOFF

    def test_indefinite_k_tilde_is_rejected(self):
        k_tilde = np.diag([1.0, -0.9])
        g = np.diag([0.0, 1.0])
        assert alpha_ratio(k_tilde, g) == pytest.approx(-9.0)
        with pytest.raises(AlphaOutOfRange):
            alpha_of(k_tilde, g)


class TestCapacityAllocation:
    def test_no_signal_at_relay(self):
        alloc = capacity_allocation([0.0, 0.0], [1.0, 0.5], 0.0, 0.0, 10.0)
        np.testing.assert_array_equal(alloc.xi, [0.0, 0.0])
        assert alloc.relay_useless

    def test_single_stream_budget_and_level(self):
        alloc = capacity_allocation([1.0], [1.0], 0.0, 0.0, 2.0)
        np.testing.assert_allclose(alloc.xi, [1.0])
        # [sqrt(1 + 4 mu) - 3] / 4 = 1
        assert alloc.mu == pytest.approx(12.0, rel=1e-8)

    def test_zero_theta_mode_excluded(self):
        alloc = capacity_allocation([2.0, 1.0], [1.0, 0.0], 0.5, 0.2, 3.0)
        assert alloc.xi[1] == 0.0
        assert (2.0 + 1.0 + 0.1) * alloc.xi[0] == pytest.approx(3.0)

    def test_grid_optimality(self, rng):
        for _ in range(10):
            lam = np.sort(rng.exponential(5.0, size=2))[::-1]
            theta = np.sort(rng.uniform(0.1, 1.0, size=2))[::-1]
            kappa, alpha, p_r = float(rng.uniform(0, 3)), float(rng.uniform(0, 1)), float(rng.uniform(1, 50))
            w = lam + 1.0 + alpha * kappa
            alloc = capacity_allocation(lam, theta, kappa, alpha, p_r)
            assert float(np.dot(w, alloc.xi)) == pytest.approx(p_r, rel=1e-10)

            # The objective increases in every xi, so the optimum is budget tight.
            t = np.linspace(0.0, 1.0, 1001)
            grid = np.stack([t * p_r / w[0], (1 - t) * p_r / w[1]], axis=1)
            best = max(relay_capacity_objective(x, lam, theta) for x in grid)
            assert relay_capacity_objective(alloc.xi, lam, theta) >= best - 1e-4


class TestMseAllocation:
    def test_zero_budget(self):
        xi = mse_allocation([1.0, 1.0], [1.0, 1.0], 0.0, 0.0, 0.0, [0.0, 0.0])
        np.testing.assert_array_equal(xi, [0.0, 0.0])
        n_r = 3
        assert relay_mse_objective(np.zeros(n_r), np.ones(n_r), np.ones(n_r)) == n_r * 2 * n_r

    def test_single_stream_line_search(self):
        lam, theta, kappa, alpha, p_r = 1.5, 0.8, 0.4, 0.5, 4.0
        w = lam + 1.0 + alpha * kappa
        xi = mse_allocation([lam], [theta], kappa, alpha, p_r, [0.1])
        grid = np.arange(0.0, p_r / w + 1e-12, 1e-5)
        values = [relay_mse_objective([x], [lam], [theta]) for x in grid]
        assert abs(xi[0] - grid[int(np.argmin(values))]) <= 1e-4

    def test_grid_optimality_and_descent(self, rng):
        for _ in range(5):
            lam = np.sort(rng.exponential(3.0, size=2))[::-1]
            theta = np.sort(rng.uniform(0.3, 1.5, size=2))[::-1]
            kappa, alpha, p_r = float(rng.uniform(0, 2)), float(rng.uniform(0, 1)), float(rng.uniform(1, 20))
            w = lam + 1.0 + alpha * kappa
            init = capacity_allocation(lam, theta, kappa, alpha, p_r).xi
            xi = mse_allocation(lam, theta, kappa, alpha, p_r, init)

            assert np.all(xi >= 0.0)
            assert float(np.dot(w, xi)) <= p_r * (1 + 1e-10)
            value = relay_mse_objective(xi, lam, theta)
            assert value <= relay_mse_objective(init, lam, theta) + 1e-12

            best = np.inf
            for x1 in np.linspace(0.0, p_r / w[0], 201):
                for x2 in np.linspace(0.0, (p_r - w[0] * x1) / w[1], 201):
                    best = min(best, relay_mse_objective([x1, x2], lam, theta))
            assert value <= best + 1e-4

    def test_projected_gradient_stationarity(self, rng):
        tol = 1e-6
        for _ in range(200):
            lam = np.sort(rng.exponential(5.0, size=4))[::-1]
            theta = np.sort(rng.uniform(0.1, 1.5, size=4))[::-1]
            kappa, alpha, p_r = float(rng.uniform(0, 3)), float(rng.uniform(0, 1)), float(rng.uniform(1, 100))
            w = lam + 1.0 + alpha * kappa
            init = capacity_allocation(lam, theta, kappa, alpha, p_r).xi
            xi = mse_allocation(lam, theta, kappa, alpha, p_r, init, tol=tol)

            a = theta ** 2
            d = a * (lam + 1.0) * xi + 1.0
            grad = -a * (lam + 1.0) / d ** 2 * np.sum(a * xi + 2.0) + np.sum(1.0 / d) * a
            assert projected_gradient_norm(xi, grad, w, p_r) <= tol
            assert relay_mse_objective(xi, lam, theta) <= relay_mse_objective(init, lam, theta) + 1e-12

    def test_projection(self, rng):
        w = np.array([1.0, 2.0, 3.0])
        inside = np.array([0.1, 0.2, 0.1])
        np.testing.assert_array_equal(project_weighted_budget(inside, w, 5.0), inside)
        x = np.array([4.0, -1.0, 2.0])
        y = project_weighted_budget(x, w, 5.0)
        assert np.all(y >= 0.0)
        assert float(np.dot(w, y)) == pytest.approx(5.0)
        for _ in range(500):
            z = rng.uniform(0.0, 1.0, size=3)
            z *= 5.0 / float(np.dot(w, z)) * rng.uniform(0.0, 1.0)
            assert np.linalg.norm(x - y) <= np.linalg.norm(x - z) + 1e-12


class TestSolveRelay:
    def test_no_direct_links_single_pass(self, rng):
        _, _, _, geo = _geometry(rng, 4, direct=0.0)
        design = solve_relay(geo, 100.0, Mode.CAPACITY)
        assert design.inner_iters == 1
        assert design.alpha == 0.0
        reference = capacity_allocation(geo.lambda_k, geo.theta, 0.0, 0.0, 100.0)
        np.testing.assert_allclose(design.xi, reference.xi, atol=1e-10)

    def test_silent_sources(self, rng):
        channels = random_channels(rng, 2, 2, 2)
        zero = np.zeros((2, 2))
        design = solve_relay(relay_geometry(channels, zero, zero), 10.0, "capacity")
        np.testing.assert_array_equal(design.g, np.zeros((2, 2)))
        assert design.used_power == 0.0
        assert design.relay_useless

    @pytest.mark.parametrize("mode", list(Mode))
    def test_true_budget_and_audit(self, rng, mode):
        for _ in range(5):
            _, _, _, geo = _geometry(rng, 4)
            p_r = 100.0
            design = solve_relay(geo, p_r, mode)
            assert design.used_power <= p_r * (1 + 1e-8)
            assert design.used_power == pytest.approx(relay_power(geo, design.g))
            assert 0.0 < design.power_scale <= 1.0
            assert design.power_residual == pytest.approx(
                design.modified_power - design.used_power / design.power_scale, rel=1e-9, abs=1e-9)
            assert all(0.0 <= a <= 1.0 for a in design.alpha_trace)
            assert 0.0 <= design.alpha <= 1.0
            assert design.inner_iters <= 100

    def test_diagonalizes_relayed_signal(self, rng):
        channels, _, _, geo = _geometry(rng, 4)
        design = solve_relay(geo, 100.0, Mode.CAPACITY)
        hg = geo.u_h.conj().T @ channels.h_dr @ design.g
        m = hg @ geo.k @ hg.conj().T
        off = m - np.diag(np.diag(m))
        assert np.linalg.norm(off) <= 1e-8 * np.linalg.norm(m)

    def test_scalar_objective_matches_network_capacity(self, rng):
        channels, f1, f2, geo = _geometry(rng, 4)
        design = solve_relay(geo, 100.0, Mode.CAPACITY)
        g = assemble_relay(geo, design.xi)
        expected = sum_capacity(channels, f1, f2, g) - log2det_pd(geo.t)
        assert relay_capacity_objective(design.xi, geo.lambda_k, geo.theta) == pytest.approx(expected, rel=1e-8, abs=1e-8)

    def test_naive_gain_without_relay_links(self):
        assert naive_relay_gain(np.zeros((4, 4)), 8.0) == pytest.approx(np.sqrt(2.0))

    def test_rescale_to_budget_only_scales_down(self, rng):
        _, _, _, geo = _geometry(rng, 4)
        g = np.eye(4, dtype=complex)
        used = relay_power(geo, g)
        np.testing.assert_array_equal(rescale_to_budget(geo, g, 2.0 * used), g)
        shrunk = rescale_to_budget(geo, g, 0.5 * used)
        assert relay_power(geo, shrunk) == pytest.approx(0.5 * used, rel=1e-12)
