#!/usr/bin/env python3
"""Why a resistive model is enough for transmission planning.

AC grids transfer real power through voltage phase differences; with
near-unit voltage magnitudes and susceptance-dominated lines, the lossless
flow solves a Laplacian system in the susceptances, and the leading-order
line losses reduce to a rescaled resistive dissipation. This script checks
that identity numerically: for any conductance-to-susceptance ratio mu, the
DC-model loss equals (mu^2 / 2) times the resistive loss, so optimizing the
resistive network optimizes the grid.

Run:  python demos/05_dc_power_flow.py
"""

import numpy as np

import gridopt as g


def main():
    rng = np.random.default_rng(0)
    topo = g.build_grid_network(4, include_diagonals=True)
    theta = rng.uniform(0.5, 2.0, topo.n_edges)

    power = rng.standard_normal(topo.n_nodes)
    power -= power.mean()  # balanced production/consumption

    resistive = g.expected_loss(topo, theta, np.outer(power, power))
    print(f"resistive dissipation: {resistive:.8f}")
    print(f"{'mu':>6}  {'DC-model loss':>14}  {'(mu^2/2) * resistive':>20}")
    for mu in (0.05, 0.1, 0.2, 0.5):
        dc = g.ac_dc_loss(topo, theta, power, mu)
        print(f"{mu:6.2f}  {dc:14.8f}  {mu**2 / 2 * resistive:20.8f}")

    k_tilde = g.conductance_matrix(topo, theta) / 0.1
    phases = g.solve_potentials(k_tilde, power)
    residual = np.linalg.norm(k_tilde @ phases - power)
    print(f"phase recovery residual |K~ phi - p| = {residual:.2e}")


if __name__ == "__main__":
    main()
