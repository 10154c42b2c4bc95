#!/usr/bin/env python3
"""Structure selection: fixed charges thin the grid to trees and forests.

Adding a per-line fixed charge (right-of-way, towers, permits) on top of the
conductor cost turns line sizing into a combinatorial structure problem. The
annealed smoothing + reweighting heuristic keeps the convex engine in the
loop while the smoothed step cost hardens; the designs collapse onto minimal
trees, and with two generators the network may split into one island per
generator. Compare the SVGs against the dense convex ones from demo 01.

Run:  python demos/02_sparse_designs.py
"""

from pathlib import Path

import numpy as np

import gridopt as g

OUT = Path(__file__).parent / "output"

CONFIGS = {
    "sparse_gen_corner": ([0], None),
    "sparse_gen_center": ([40], None),
    # consumers live in the right-hand columns; unused transmission nodes
    # simply drop out of the built network
    "sparse_band": ([36], [r * 9 + c for r in range(9) for c in range(5, 9)]),
    "sparse_two_gens": ([0, 80], None),
}


def forest_stats(topology, active):
    nodes = {u for e in topology.edges if active[e.id] for u in (e.u, e.v)}
    parent = {u: u for u in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in topology.edges:
        if active[e.id]:
            ru, rv = find(e.u), find(e.v)
            if ru != rv:
                parent[rv] = ru
    comps = len({find(u) for u in nodes})
    return len(nodes), comps


def main():
    OUT.mkdir(exist_ok=True)
    for name, (generators, consumers) in CONFIGS.items():
        grid = g.build_grid_network(9, include_diagonals=True)
        if consumers is None:
            consumers = [i for i in range(81) if i not in set(generators)]
        topo = grid.with_roles(generators=generators, consumers=consumers)
        load = g.consumer_loads(topo, mean=-1.0, std=1.0 / 3.0)

        if len(generators) > 1:
            solve_topo, moment = g.augment_virtual_generator(topo, load)
            costs = g.CostModel.per_length(topo, 1.0, 1.0).extended_to(solve_topo)
        else:
            solve_topo, moment = topo, g.moment_with_single_source(topo, load)
            costs = g.CostModel.per_length(topo, 1.0, 1.0)

        result = g.design_sparse(solve_topo, moment, costs)
        active = result.active & solve_topo.real_edge_mask
        n_nodes, comps = forest_stats(solve_topo, active)
        is_forest = int(active.sum()) == n_nodes - comps
        print(
            f"{name}: objective={result.true_objective:9.2f}  "
            f"lines={int(active.sum()):3d}  components={comps}  "
            f"forest={is_forest}  mm_iterations={len(result.records)}"
        )
        g.render_svg(solve_topo, np.where(result.active, result.theta, 0.0),
                     OUT / f"{name}.svg")
    print(f"figures in {OUT}")


if __name__ == "__main__":
    main()
