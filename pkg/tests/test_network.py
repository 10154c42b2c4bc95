import numpy as np
import pytest

import gridopt as g
from conftest import diamond_network, grid_problem, path3_network, two_node_network


class TestGridGenerator:
    def test_degenerate_grid(self):
        topo = g.build_grid_network(1, include_diagonals=True)
        assert topo.n_nodes == 1 and topo.n_edges == 0

    def test_w2_with_diagonals(self):
        topo = g.build_grid_network(2, include_diagonals=True)
        assert topo.n_nodes == 4
        assert topo.n_edges == 6  # 4 orthogonal + 2 diagonal

    def test_w3_with_diagonals(self):
        topo = g.build_grid_network(3, include_diagonals=True)
        assert topo.n_nodes == 9
        assert topo.n_edges == 20  # 12 orthogonal + 8 diagonal

    def test_w9_king_graph_counts(self):
        topo = g.build_grid_network(9, include_diagonals=True)
        assert topo.n_nodes == 81
        lengths = topo.edge_lengths
        assert np.sum(lengths == 1.0) == 144  # 2 * 9 * 8 orthogonal
        assert np.sum(lengths > 1.0) == 128  # 2 * 8 * 8 diagonal
        assert topo.n_edges == 272

    def test_all_transmission_by_default(self):
        topo = g.build_grid_network(3)
        assert all(nd.role == g.TRANSMISSION for nd in topo.nodes)

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            g.build_grid_network(0)


class TestTopologyInvariants:
    def test_rejects_self_loop(self):
        nodes = (g.Node(0, 0, 0), g.Node(1, 1, 0))
        with pytest.raises(ValueError, match="self-loop"):
            g.NetworkTopology(nodes, (g.Edge(0, 0, 0, 1.0),))

    def test_rejects_duplicate_pair(self):
        nodes = (g.Node(0, 0, 0), g.Node(1, 1, 0))
        edges = (g.Edge(0, 0, 1, 1.0), g.Edge(1, 1, 0, 1.0))
        with pytest.raises(ValueError, match="duplicate"):
            g.NetworkTopology(nodes, edges)
        # explicit opt-in for degenerate test networks
        topo = g.NetworkTopology(nodes, edges, allow_parallel=True)
        assert topo.n_edges == 2

    def test_rejects_dangling_endpoint(self):
        nodes = (g.Node(0, 0, 0), g.Node(1, 1, 0))
        with pytest.raises(ValueError, match="out of range"):
            g.NetworkTopology(nodes, (g.Edge(0, 0, 5, 1.0),))

    def test_rejects_sparse_node_ids(self):
        nodes = (g.Node(0, 0, 0), g.Node(2, 1, 0))
        with pytest.raises(ValueError, match="dense"):
            g.NetworkTopology(nodes, ())

    def test_virtual_edge_must_join_virtual_to_generator(self):
        nodes = (
            g.Node(0, 0, 0, g.CONSUMER),
            g.Node(1, 1, 0, g.GENERATOR),
            g.Node(2, 2, 0, g.VIRTUAL_GENERATOR),
        )
        with pytest.raises(ValueError, match="virtual"):
            g.NetworkTopology(
                nodes, (g.Edge(0, 0, 2, 1.0, kind=g.network.EDGE_VIRTUAL),)
            )

    def test_with_roles_rejects_conflicts(self):
        topo = g.build_grid_network(2)
        with pytest.raises(ValueError, match="two roles"):
            topo.with_roles(generators=[0], consumers=[0])

    def test_incidence_matrix_columns(self):
        topo = path3_network()
        a = topo.incidence_matrix
        assert a.shape == (3, 2)
        assert set(np.abs(a).sum(axis=0)) == {2.0}
        assert np.allclose(a.sum(axis=0), 0.0)


class TestSingleGeneratorMoment:
    def test_two_consumer_block_matrix(self):
        load = g.LoadModel(np.array([0.0, -1.0, -1.0]), np.zeros(3))
        moment = g.single_generator_moment(load, 0)
        expected = np.array([[4.0, -2, -2], [-2, 1, 1], [-2, 1, 1]])
        np.testing.assert_allclose(moment.matrix, expected)

    def test_single_consumer_deterministic(self):
        load = g.LoadModel(np.array([0.0, -1.0]), np.zeros(2))
        moment = g.single_generator_moment(load, 0)
        np.testing.assert_allclose(moment.matrix, [[1.0, -1.0], [-1.0, 1.0]])

    def test_deterministic_loads_give_rank_one(self):
        rng = np.random.default_rng(3)
        load = g.LoadModel(np.concatenate([[0.0], -rng.uniform(0.5, 2, 4)]), np.zeros(5))
        moment = g.single_generator_moment(load, 0)
        assert np.linalg.matrix_rank(moment.matrix, tol=1e-9) == 1

    def test_generator_at_arbitrary_index(self):
        load = g.LoadModel(np.array([-1.0, 0.0, -1.0]), np.zeros(3))
        moment = g.single_generator_moment(load, 1)
        assert moment.matrix[1, 1] == pytest.approx(4.0)
        np.testing.assert_allclose(moment.matrix.sum(axis=0), 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_balance_and_psd_invariants(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 8))
        means = np.concatenate([[0.0], -rng.uniform(0.1, 2.0, n - 1)])
        stds = np.concatenate([[0.0], rng.uniform(0.0, 0.5, n - 1)])
        moment = g.single_generator_moment(g.LoadModel(means, stds), 0).matrix
        scale = np.abs(moment).max()
        assert np.abs(moment.sum(axis=1)).max() <= 1e-10 * scale
        assert np.linalg.eigvalsh(moment)[0] >= -1e-10 * np.linalg.norm(moment, 2)

    def test_matches_empirical_second_moment(self):
        rng = np.random.default_rng(42)
        means = np.array([0.0, -1.0, -0.5, 0.0])
        stds = np.array([0.0, 0.3, 0.2, 0.0])
        moment = g.single_generator_moment(g.LoadModel(means, stds), 0).matrix
        n_samples = 200_000
        draws = means[None, :] + stds[None, :] * rng.standard_normal((n_samples, 4))
        draws[:, 0] = -draws[:, 1:].sum(axis=1)
        empirical = draws.T @ draws / n_samples
        np.testing.assert_allclose(empirical, moment, atol=0.05)

    def test_full_covariance_supported(self):
        cov = np.array(
            [[0.0, 0, 0], [0, 0.09, 0.02], [0, 0.02, 0.04]]
        )
        load = g.LoadModel(
            np.array([0.0, -1.0, -1.0]), np.array([0.0, 0.3, 0.2]), covariance=cov
        )
        moment = g.single_generator_moment(load, 0).matrix
        assert moment[1, 2] == pytest.approx(1.0 + 0.02)
        assert moment[0, 0] == pytest.approx(4.0 + cov.sum())

    def test_rejects_generator_with_load(self):
        load = g.LoadModel(np.array([-1.0, -1.0]), np.zeros(2))
        with pytest.raises(ValueError):
            g.single_generator_moment(load, 0)

    def test_moment_with_single_source_rejects_two_generators(self):
        topo = g.build_grid_network(2).with_roles(generators=[0, 3], consumers=[1, 2])
        load = g.consumer_loads(topo)
        with pytest.raises(ValueError, match="exactly one"):
            g.moment_with_single_source(topo, load)


class TestVirtualGeneratorAugmentation:
    def test_counts_on_grid(self):
        topo = g.build_grid_network(3, include_diagonals=True).with_roles(
            generators=[0, 8], consumers=[i for i in range(1, 8)]
        )
        load = g.consumer_loads(topo)
        aug, moment = g.augment_virtual_generator(topo, load)
        assert aug.n_nodes == 10 and aug.n_edges == 22
        assert aug.virtual_generator == 9
        assert moment.n_nodes == 10
        assert sum(not r for r in aug.real_edge_mask) == 2

    def test_rejects_zero_generators(self):
        topo = g.build_grid_network(2).with_roles(consumers=[0, 1, 2, 3])
        load = g.consumer_loads(topo)
        with pytest.raises(ValueError, match="at least one generator"):
            g.augment_virtual_generator(topo, load)

    def test_rejects_double_augmentation(self):
        topo = g.build_grid_network(2).with_roles(generators=[0], consumers=[1, 2, 3])
        load = g.consumer_loads(topo)
        aug, _ = g.augment_virtual_generator(topo, load)
        with pytest.raises(ValueError, match="already"):
            g.augment_virtual_generator(
                aug, g.LoadModel(np.append(load.means, 0.0), np.append(load.stds, 0.0))
            )

    def test_single_generator_augmentation_is_loss_equivalent(self):
        topo = path3_network()
        load = g.LoadModel(np.array([0.0, 0.0, -1.0]), np.zeros(3))
        direct = g.expected_loss(
            topo, np.array([1.0, 2.0]), g.moment_with_single_source(topo, load)
        )
        aug, moment = g.augment_virtual_generator(topo, load)
        theta_aug = np.array([1.0, 2.0, 1e8])
        augmented = g.expected_loss(aug, theta_aug, moment)
        assert augmented == pytest.approx(direct, rel=1e-6)

    def test_optimized_dispatch_equivalence(self):
        # 4-node path with generators at both ends; flow splits optimally
        nodes = (
            g.Node(0, 0, 0, g.GENERATOR),
            g.Node(1, 1, 0, g.CONSUMER),
            g.Node(2, 2, 0, g.CONSUMER),
            g.Node(3, 3, 0, g.GENERATOR),
        )
        edges = tuple(g.Edge(i, i, i + 1, 1.0) for i in range(3))
        topo = g.NetworkTopology(nodes, edges)
        b_c = np.array([0.0, -1.0, -2.0, 0.0])
        theta = np.array([1.0, 0.7, 1.3])

        oracle = g.optimal_dispatch_oracle(topo, theta, b_c, [0, 3])
        load = g.LoadModel(b_c, np.zeros(4))
        aug, moment = g.augment_virtual_generator(topo, load)
        theta_aug = np.concatenate([theta, [1e8, 1e8]])
        augmented = g.expected_loss(aug, theta_aug, moment)
        assert augmented == pytest.approx(oracle, rel=1e-3)


class TestLoadAndCostModels:
    def test_load_model_validates_transmission_nodes(self):
        topo = path3_network()
        bad = g.LoadModel(np.array([0.0, -0.5, -1.0]), np.zeros(3))
        with pytest.raises(ValueError, match="transmission"):
            bad.validate_against(topo)

    def test_covariance_diagonal_must_match(self):
        with pytest.raises(ValueError, match="diagonal"):
            g.LoadModel(
                np.array([0.0, -1.0]),
                np.array([0.0, 0.3]),
                covariance=np.diag([0.0, 0.5]),
            )

    def test_per_length_cost_pattern(self):
        topo = g.build_grid_network(3, include_diagonals=True)
        costs = g.CostModel.per_length(topo, 1.0, 1.0)
        lengths = topo.edge_lengths
        np.testing.assert_allclose(costs.alpha[lengths == 1.0], 1.0)
        np.testing.assert_allclose(costs.alpha[lengths > 1.0], 2.0)
        np.testing.assert_allclose(costs.beta[lengths > 1.0], np.sqrt(2.0))

    def test_conductor_physics_cost(self):
        topo = path3_network()
        costs = g.CostModel.from_conductor_physics(
            topo, price_per_volume=6.0, conductivity=3.0, trade_off=2.0
        )
        np.testing.assert_allclose(costs.alpha, 4.0)

    def test_virtual_edges_nearly_free(self):
        topo = g.build_grid_network(2).with_roles(generators=[0, 3], consumers=[1, 2])
        aug, _ = g.augment_virtual_generator(topo, g.consumer_loads(topo))
        costs = g.CostModel.per_length(topo, 1.0, 1.0).extended_to(aug)
        costs.validate_against(aug)
        assert np.all(costs.beta[~aug.real_edge_mask] == 0.0)
        assert costs.alpha[~aug.real_edge_mask].max() <= 1e-3 * costs.alpha[
            aug.real_edge_mask
        ].min()
        with pytest.raises(ValueError, match="virtual"):
            g.CostModel(np.ones(aug.n_edges), np.ones(aug.n_edges)).validate_against(aug)

    def test_induced_subnetwork_remaps(self):
        topo = diamond_network()
        mask = np.array([False, True, False, True, False])
        sub, old_ids = g.induced_subnetwork(topo, mask)
        assert list(old_ids) == [0, 2, 3]
        assert sub.n_nodes == 3 and sub.n_edges == 2
        assert {(e.u, e.v) for e in sub.edges} == {(0, 1), (1, 2)}

    def test_immutability(self):
        topo = two_node_network()
        with pytest.raises(AttributeError):
            topo.nodes = ()
        with pytest.raises(ValueError):
            topo.incidence_matrix[0, 0] = 5.0
