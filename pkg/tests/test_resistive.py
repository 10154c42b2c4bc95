import numpy as np
import pytest

import gridopt as g
from conftest import (
    grid_problem,
    parallel_network,
    path3_network,
    two_node_network,
    unit_moment,
)


class TestConductanceMatrix:
    def test_triangle_of_unit_edges(self):
        nodes = tuple(g.Node(i, float(i), 0.0) for i in range(3))
        edges = (g.Edge(0, 0, 1, 1.0), g.Edge(1, 1, 2, 1.0), g.Edge(2, 0, 2, 1.0))
        topo = g.NetworkTopology(nodes, edges)
        k = g.conductance_matrix(topo, np.ones(3))
        np.testing.assert_allclose(np.diag(k), 2.0)
        np.testing.assert_allclose(k[np.triu_indices(3, 1)], -1.0)

    def test_single_edge(self):
        k = g.conductance_matrix(two_node_network(), np.array([3.0]))
        np.testing.assert_allclose(k, [[3.0, -3.0], [-3.0, 3.0]])

    def test_zero_conductance(self):
        k = g.conductance_matrix(path3_network(), np.zeros(2))
        np.testing.assert_allclose(k, 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="edges"):
            g.conductance_matrix(path3_network(), np.ones(3))

    def test_laplacian_invariants_random(self):
        rng = np.random.default_rng(0)
        topo, _, _ = grid_problem(3)
        theta = rng.uniform(0.0, 2.0, topo.n_edges)
        k = g.conductance_matrix(topo, theta)
        np.testing.assert_allclose(k, k.T)
        np.testing.assert_allclose(k @ np.ones(9), 0.0, atol=1e-12)
        assert np.linalg.eigvalsh(k)[0] >= -1e-10


class TestSolvePotentials:
    def test_two_node_transfer(self):
        k = g.conductance_matrix(two_node_network(), np.array([1.0]))
        u = g.solve_potentials(k, np.array([1.0, -1.0]))
        np.testing.assert_allclose(u, [0.5, -0.5])

    def test_zero_injection(self):
        k = g.conductance_matrix(path3_network(), np.ones(2))
        np.testing.assert_allclose(g.solve_potentials(k, np.zeros(3)), 0.0)

    def test_series_resistance_path(self):
        k = g.conductance_matrix(path3_network(), np.ones(2))
        u = g.solve_potentials(k, np.array([1.0, 0.0, -1.0]))
        np.testing.assert_allclose(u, [1.0, 0.0, -1.0], atol=1e-12)

    def test_rejects_unbalanced_injection(self):
        k = g.conductance_matrix(two_node_network(), np.array([1.0]))
        with pytest.raises(ValueError, match="sum to zero"):
            g.solve_potentials(k, np.array([1.0, 0.0]))

    def test_disconnected_raises(self):
        k = g.conductance_matrix(path3_network(), np.array([1.0, 0.0]))
        with pytest.raises(g.DisconnectedNetworkError):
            g.solve_potentials(k, np.array([1.0, 0.0, -1.0]))

    @pytest.mark.parametrize("seed", range(3))
    def test_residual_and_zero_mean(self, seed):
        rng = np.random.default_rng(seed)
        topo, _, _ = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        b = rng.standard_normal(9)
        b -= b.mean()
        k = g.conductance_matrix(topo, theta)
        u = g.solve_potentials(k, b)
        assert np.linalg.norm(k @ u - b) <= 1e-8 * np.linalg.norm(b)
        assert abs(u.sum()) <= 1e-8


class TestExpectedLoss:
    def test_two_node_value(self):
        assert g.expected_loss(two_node_network(), np.array([2.0]), unit_moment()) == (
            pytest.approx(0.5)
        )

    def test_path_resistances_add(self):
        b = np.array([1.0, 0.0, -1.0])
        loss = g.expected_loss(path3_network(), np.ones(2), np.outer(b, b))
        assert loss == pytest.approx(2.0)

    def test_homogeneity_degree_minus_one(self):
        rng = np.random.default_rng(1)
        topo, _, moment = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        assert g.expected_loss(topo, 10.0 * theta, moment) == pytest.approx(
            g.expected_loss(topo, theta, moment) / 10.0
        )

    def test_nonnegative(self):
        topo, _, moment = grid_problem(3)
        theta = np.random.default_rng(2).uniform(0.1, 2.0, topo.n_edges)
        assert g.expected_loss(topo, theta, moment) >= 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_midpoint_convexity(self, seed):
        rng = np.random.default_rng(seed)
        topo, _, moment = grid_problem(3)
        t1 = rng.uniform(0.1, 2.0, topo.n_edges)
        t2 = rng.uniform(0.1, 2.0, topo.n_edges)
        mid = g.expected_loss(topo, 0.5 * (t1 + t2), moment)
        avg = 0.5 * (
            g.expected_loss(topo, t1, moment) + g.expected_loss(topo, t2, moment)
        )
        assert mid <= avg + 1e-9


class TestLossDerivatives:
    def test_single_edge_gradient(self):
        grad = g.loss_gradient(two_node_network(), np.array([2.0]), unit_moment())
        np.testing.assert_allclose(grad, [-0.25])

    def test_zero_moment_gradient(self):
        topo = path3_network()
        np.testing.assert_allclose(
            g.loss_gradient(topo, np.ones(2), np.zeros((3, 3))), 0.0
        )

    def test_gradient_nonpositive(self):
        rng = np.random.default_rng(4)
        topo, _, moment = grid_problem(3)
        grad = g.loss_gradient(topo, rng.uniform(0.1, 2.0, topo.n_edges), moment)
        assert np.all(grad <= 1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        topo, _, moment = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        analytic = g.loss_gradient(topo, theta, moment)
        numeric = g.finite_difference_gradient(
            lambda t: g.expected_loss(topo, t, moment), theta, h=1e-4
        )
        assert np.abs(analytic - numeric).max() <= 1e-5 * np.abs(numeric).max()

    def test_single_edge_hessian(self):
        hess = g.loss_hessian(two_node_network(), np.array([2.0]), unit_moment())
        np.testing.assert_allclose(hess, [[0.25]])

    def test_zero_moment_hessian(self):
        topo = path3_network()
        np.testing.assert_allclose(
            g.loss_hessian(topo, np.ones(2), np.zeros((3, 3))), 0.0
        )

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        topo, _, moment = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        analytic = g.loss_hessian(topo, theta, moment)
        numeric = g.finite_difference_jacobian(
            lambda t: g.loss_gradient(topo, t, moment), theta, h=1e-4
        )
        assert np.abs(analytic - numeric).max() <= 1e-4 * np.abs(numeric).max()
        assert np.linalg.eigvalsh(analytic)[0] >= -1e-8


class TestAcDcLoss:
    def test_unit_transfer(self):
        loss = g.ac_dc_loss(
            two_node_network(), np.array([1.0]), np.array([1.0, -1.0]), mu=1.0
        )
        assert loss == pytest.approx(0.5)

    def test_zero_power(self):
        assert g.ac_dc_loss(path3_network(), np.ones(2), np.zeros(3), mu=0.5) == 0.0

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_scaled_resistive_loss(self, seed):
        rng = np.random.default_rng(seed)
        topo, _, _ = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        p = rng.standard_normal(9)
        p -= p.mean()
        mu = rng.uniform(0.05, 0.5)
        direct = g.ac_dc_loss(topo, theta, p, mu)
        scaled = mu**2 / 2.0 * g.expected_loss(topo, theta, np.outer(p, p))
        assert direct == pytest.approx(scaled, rel=1e-10)

    def test_phase_recovery(self):
        rng = np.random.default_rng(9)
        topo, _, _ = grid_problem(3)
        theta = rng.uniform(0.1, 2.0, topo.n_edges)
        p = rng.standard_normal(9)
        p -= p.mean()
        mu = 0.1
        k_tilde = g.conductance_matrix(topo, theta) / mu
        phi = g.solve_potentials(k_tilde, p)
        assert np.linalg.norm(k_tilde @ phi - p) <= 1e-8 * np.linalg.norm(p)

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError, match="mu"):
            g.ac_dc_loss(two_node_network(), np.ones(1), np.array([1.0, -1.0]), mu=0.0)


class TestLossOnSupport:
    def test_matches_expected_loss_on_full_support(self):
        topo, _, moment = grid_problem(3)
        theta = np.random.default_rng(11).uniform(0.1, 2.0, topo.n_edges)
        assert g.loss_on_support(topo, theta, moment) == g.expected_loss(
            topo, theta, moment
        )

    def test_handles_stranded_unloaded_node(self):
        # transmission node 1 is bypassed entirely by the active support
        nodes = (
            g.Node(0, 0, 0, g.GENERATOR),
            g.Node(1, 1, 0, g.TRANSMISSION),
            g.Node(2, 2, 0, g.CONSUMER),
        )
        edges = (g.Edge(0, 0, 1, 1.0), g.Edge(1, 1, 2, 1.0), g.Edge(2, 0, 2, 2.0))
        topo = g.NetworkTopology(nodes, edges)
        moment = np.outer([1.0, 0.0, -1.0], [1.0, 0.0, -1.0])
        theta = np.array([0.0, 0.0, 2.0])
        # direct factorization would be singular at the stranded node
        with pytest.raises(g.DisconnectedNetworkError):
            g.expected_loss(topo, theta, moment)
        assert g.loss_on_support(topo, theta, moment) == pytest.approx(0.5)

    def test_disconnected_loaded_nodes_raise(self):
        topo = path3_network()
        moment = np.outer([1.0, 0.0, -1.0], [1.0, 0.0, -1.0])
        with pytest.raises(g.DisconnectedNetworkError):
            g.loss_on_support(topo, np.array([1.0, 0.0]), moment)
