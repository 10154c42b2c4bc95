#!/usr/bin/env python3
"""Designs that survive a line failure or a generator failure.

A tree is cheap but one line failure blacks out everything behind it.
Replacing the dissipation by a smooth soft-max over all single-failure
scenarios makes the optimizer pay for backup paths: the single-generator
design comes back 2-edge-connected (every consumer keeps two disjoint routes
to the generator), and with failable generators the two-generator design
fuses into one connected network instead of two islands.

Run:  python demos/03_robust_designs.py   (a few minutes)
"""

from pathlib import Path

import numpy as np

import gridopt as g

OUT = Path(__file__).parent / "output"


def run(name, generators, failable):
    grid = g.build_grid_network(9, include_diagonals=True)
    consumers = [i for i in range(81) if i not in set(generators)]
    topo = grid.with_roles(generators=generators, consumers=consumers)
    load = g.consumer_loads(topo, mean=-1.0, std=1.0 / 3.0)

    if len(generators) > 1 or failable == "virtual":
        solve_topo, moment = g.augment_virtual_generator(topo, load)
        costs = g.CostModel.per_length(topo, 1.0, 1.0).extended_to(solve_topo)
    else:
        solve_topo, moment = topo, g.moment_with_single_source(topo, load)
        costs = g.CostModel.per_length(topo, 1.0, 1.0)

    settings = g.RobustSettings(k=1, tau=0.01, failable=failable)
    result = g.design_robust(solve_topo, moment, costs, settings)
    active = result.active & solve_topo.real_edge_mask
    certified, witness = g.connectivity_certify(
        solve_topo, active, topo.consumers, topo.generators, 1
    )
    print(
        f"{name}: worst-case loss={result.diagnostics['worst_case']:8.2f}  "
        f"lines={int(active.sum()):3d}  2-connected={certified}  "
        f"scenarios={result.diagnostics['n_scenarios']}"
    )
    if witness is not None:
        print(f"  witness: consumer {witness[0]} cut {witness[1]}")
    g.render_svg(solve_topo, np.where(result.active, result.theta, 0.0),
                 OUT / f"{name}.svg")


def main():
    OUT.mkdir(exist_ok=True)
    run("robust_lines_gen_corner", [0], "real")
    run("robust_generators_two_gens", [0, 80], "virtual")
    print(f"figures in {OUT}")


if __name__ == "__main__":
    main()
