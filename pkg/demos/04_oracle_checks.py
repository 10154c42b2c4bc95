#!/usr/bin/env python3
"""Sanity oracles on desk-size instances.

Everything clever in this package is heuristic or analytic, so it ships with
independent referees:

  * exhaustive subgraph enumeration (the true combinatorial optimum),
  * central finite differences for the loss calculus,
  * a KKT solve for optimal generator dispatch,
  * max-flow certification of failure-tolerant connectivity.

This script runs all four on a 4-node diamond and prints the comparisons.

Run:  python demos/04_oracle_checks.py
"""

import numpy as np

import gridopt as g


def diamond():
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


def main():
    topo = diamond()
    load = g.LoadModel(np.array([0.0, -1.0, -1.0, -1.0]), np.zeros(4))
    moment = g.moment_with_single_source(topo, load)
    costs = g.CostModel(np.ones(5), np.ones(5))

    heuristic = g.design_sparse(topo, moment, costs)
    oracle = g.brute_force_design(topo, moment, costs)
    print("subgraph enumeration")
    print(f"  heuristic: {heuristic.true_objective:.6f} on edges "
          f"{sorted(int(i) for i in np.flatnonzero(heuristic.active))}")
    print(f"  oracle:    {oracle.value:.6f} on edges {oracle.support} "
          f"({oracle.subsets_evaluated} feasible subsets)")

    theta = np.full(5, 0.8)
    grad = g.loss_gradient(topo, theta, moment)
    grad_fd = g.finite_difference_gradient(
        lambda t: g.expected_loss(topo, t, moment), theta
    )
    print("finite differences")
    print(f"  max |analytic - numeric| = {np.abs(grad - grad_fd).max():.2e}")

    two_gen = topo.with_roles(generators=[0, 3], consumers=[1, 2])
    b_c = np.array([0.0, -1.0, -1.0, 0.0])
    dispatch = g.optimal_dispatch_oracle(two_gen, theta, b_c, [0, 3])
    aug, aug_moment = g.augment_virtual_generator(
        two_gen, g.LoadModel(b_c, np.zeros(4))
    )
    augmented = g.expected_loss(aug, np.concatenate([theta, [1e8, 1e8]]), aug_moment)
    print("optimal dispatch")
    print(f"  KKT oracle {dispatch:.8f} vs virtual-generator model {augmented:.8f}")

    certified, _ = g.connectivity_certify(
        topo, heuristic.active, [1, 2, 3], [0], 0
    )
    certified1, witness = g.connectivity_certify(
        topo, heuristic.active, [1, 2, 3], [0], 1
    )
    print("connectivity certificates")
    print(f"  tree serves everyone: {certified}; survives one failure: {certified1}"
          + (f" (witness: {witness})" if witness else ""))


if __name__ == "__main__":
    main()
