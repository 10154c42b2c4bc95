import numpy as np
import pytest

import gridopt as g
from gridopt._threads import single_threaded_blas


@pytest.fixture(scope="session", autouse=True)
def _pin_blas():
    # threaded BLAS is counterproductive at these matrix sizes
    with single_threaded_blas():
        yield


def two_node_network():
    """Generator and consumer joined by one unit-length edge."""
    nodes = (g.Node(0, 0.0, 0.0, g.GENERATOR), g.Node(1, 1.0, 0.0, g.CONSUMER))
    return g.NetworkTopology(nodes, (g.Edge(0, 0, 1, 1.0),))


def parallel_network(n_edges: int):
    """Generator and consumer joined by n parallel unit edges."""
    nodes = (g.Node(0, 0.0, 0.0, g.GENERATOR), g.Node(1, 1.0, 0.0, g.CONSUMER))
    edges = tuple(g.Edge(i, 0, 1, 1.0) for i in range(n_edges))
    return g.NetworkTopology(nodes, edges, allow_parallel=True)


def path3_network():
    nodes = (
        g.Node(0, 0.0, 0.0, g.GENERATOR),
        g.Node(1, 1.0, 0.0, g.TRANSMISSION),
        g.Node(2, 2.0, 0.0, g.CONSUMER),
    )
    return g.NetworkTopology(nodes, (g.Edge(0, 0, 1, 1.0), g.Edge(1, 1, 2, 1.0)))


def diamond_network():
    """Four nodes, five unit edges, generator at node 0."""
    nodes = (
        g.Node(0, 0.0, 0.5, g.GENERATOR),
        g.Node(1, 1.0, 0.0, g.CONSUMER),
        g.Node(2, 1.0, 1.0, g.CONSUMER),
        g.Node(3, 2.0, 0.5, g.CONSUMER),
    )
    edges = (
        g.Edge(0, 0, 1, 1.0),
        g.Edge(1, 0, 2, 1.0),
        g.Edge(2, 1, 3, 1.0),
        g.Edge(3, 2, 3, 1.0),
        g.Edge(4, 1, 2, 1.0),
    )
    return g.NetworkTopology(nodes, edges)


def grid_problem(w=3, generators=(0,), mean=-1.0, std=1.0 / 3.0, diagonals=True):
    """Grid topology with roles, its load model and single-source moment."""
    topo = g.build_grid_network(w, include_diagonals=diagonals)
    consumers = [i for i in range(topo.n_nodes) if i not in set(generators)]
    topo = topo.with_roles(generators=list(generators), consumers=consumers)
    load = g.consumer_loads(topo, mean=mean, std=std)
    if len(generators) == 1:
        moment = g.moment_with_single_source(topo, load)
        return topo, load, moment
    aug, moment = g.augment_virtual_generator(topo, load)
    return aug, load, moment


def unit_moment():
    """Deterministic unit transfer between two nodes."""
    b = np.array([1.0, -1.0])
    return np.outer(b, b)


def tiny_suite():
    """Ten fixed random design instances: 4 nodes, 5 edges, one generator.

    Small enough for exhaustive subgraph enumeration, varied enough (loads,
    costs, fixed charges) that the optimal supports range from trees to the
    full graph.
    """
    instances = []
    all_pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    positions = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    for seed in range(10):
        rng = np.random.default_rng(seed)
        drop = int(rng.integers(0, 6))
        pairs = [p for i, p in enumerate(all_pairs) if i != drop]
        nodes = tuple(
            g.Node(i, x, y, g.GENERATOR if i == 0 else g.CONSUMER)
            for i, (x, y) in enumerate(positions)
        )
        edges = tuple(
            g.Edge(i, u, v, 1.0) for i, (u, v) in enumerate(pairs)
        )
        topo = g.NetworkTopology(nodes, edges)
        means = np.concatenate([[0.0], -rng.uniform(0.5, 2.0, 3)])
        stds = np.concatenate([[0.0], rng.uniform(0.0, 1.0 / 3.0, 3)])
        load = g.LoadModel(means, stds)
        moment = g.moment_with_single_source(topo, load)
        alpha = rng.uniform(0.5, 2.0, 5)
        beta = rng.uniform(0.3, 3.0) * rng.uniform(0.5, 1.5, 5)
        costs = g.CostModel(alpha, beta)
        instances.append((f"tiny-{seed}", topo, moment, costs))
    return instances
