#!/usr/bin/env python3
"""Convex line sizing on a 9x9 candidate grid.

Four placements of generation and demand on the same over-complete king
graph (orthogonal + diagonal lines). Minimizing expected dissipation plus a
linear conductor cost sizes every line at once; the optimum is global. The
rendered SVGs show conductance as edge darkness: the solutions concentrate
copper on short corridors toward the generators but still keep many edges
mildly conductive.

Run:  python demos/01_convex_designs.py   (writes demos/output/*.svg)
"""

from pathlib import Path

import numpy as np

import gridopt as g

OUT = Path(__file__).parent / "output"

CONFIGS = {
    "convex_gen_corner": [0],
    "convex_gen_center": [40],
    "convex_two_gens": [0, 80],
    "convex_four_gens": [0, 8, 72, 80],
}


def main():
    OUT.mkdir(exist_ok=True)
    for name, generators in CONFIGS.items():
        grid = g.build_grid_network(9, include_diagonals=True)
        consumers = [i for i in range(81) if i not in set(generators)]
        topo = grid.with_roles(generators=generators, consumers=consumers)
        load = g.consumer_loads(topo, mean=-1.0, std=1.0 / 3.0)

        if len(generators) > 1:
            solve_topo, moment = g.augment_virtual_generator(topo, load)
            costs = g.CostModel.per_length(topo, 1.0, 0.0).extended_to(solve_topo)
        else:
            solve_topo, moment = topo, g.moment_with_single_source(topo, load)
            costs = g.CostModel.per_length(topo, 1.0, 0.0)

        result = g.solve_convex(solve_topo, moment, costs.alpha)
        real = solve_topo.real_edge_mask
        used = (result.theta >= 1e-5 * result.theta[real].max()) & real
        print(
            f"{name}: loss={result.loss:8.2f}  copper cost={result.cost:8.2f}  "
            f"lines used={int(used.sum())}/{int(real.sum())}  "
            f"converged={result.converged}"
        )
        g.render_svg(solve_topo, result.theta, OUT / f"{name}.svg")
    print(f"figures in {OUT}")


if __name__ == "__main__":
    main()
