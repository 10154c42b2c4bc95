"""Command-line driver: design runs, oracle verification, grid scenario generation.

Exit codes: 0 success, 2 validation error, 3 solver non-convergence,
4 infeasible robustness precondition.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .convex import BarrierSettings
from .errors import InfeasibleRobustnessError, ScenarioValidationError
from .oracles import BRUTE_FORCE_MAX_EDGES, OracleReport, brute_force_design
from .render import render_svg
from .scenario import (
    MODES,
    build_problem,
    canonical_json,
    parse_scenario,
    run_design,
    scenario_from_dict,
)
from .sparse import design_sparse

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_INFEASIBLE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridopt",
        description="Design cost-effective transmission networks by conductance optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    design = sub.add_parser("design", help="run a design scenario end to end")
    design.add_argument("--scenario", required=True, help="scenario JSON file")
    design.add_argument("--mode", choices=MODES, help="override the scenario mode")
    design.add_argument("--out", default=".", help="output directory")
    design.add_argument("--svg", action="store_true", help="also render the design")
    design.add_argument("--seed", type=int, help="override the scenario seed")
    design.add_argument("--k", type=int, help="override the failure count")
    design.add_argument("--tau", type=float, help="override the soft-max temperature")
    design.set_defaults(func=_cmd_design)

    verify = sub.add_parser(
        "verify", help="compare the sparse heuristic with the subgraph-enumeration optimum"
    )
    verify.add_argument("--scenario", required=True, help="scenario JSON file")
    verify.add_argument("--out", help="write the oracle report here (default stdout)")
    verify.set_defaults(func=_cmd_verify)

    grid = sub.add_parser("grid", help="emit a grid scenario file")
    grid.add_argument("--w", type=int, required=True, help="grid side length")
    grid.add_argument("--diagonals", action="store_true", help="include diagonal lines")
    grid.add_argument(
        "--generators", required=True, help="comma-separated generator node ids"
    )
    grid.add_argument(
        "--consumers",
        default="rest",
        help='comma-separated consumer ids, or "rest" (default)',
    )
    grid.add_argument("--mean", type=float, default=-1.0, help="consumer mean load")
    grid.add_argument("--std", type=float, default=1.0 / 3.0, help="consumer load std")
    grid.add_argument(
        "--alpha", type=float, default=1.0, help="linear cost per squared length"
    )
    grid.add_argument("--beta", type=float, default=1.0, help="fixed charge per length")
    grid.add_argument("--mode", choices=MODES, default="sparse")
    grid.add_argument("--seed", type=int, default=0)
    grid.add_argument("--name", help="scenario name (default grid<w>)")
    grid.add_argument("--out", help="write the scenario here (default stdout)")
    grid.set_defaults(func=_cmd_grid)
    return parser


def _apply_overrides(scenario, args):
    data = scenario.to_jsonable()
    changed = False
    if args.mode is not None:
        data["mode"] = args.mode
        changed = True
    if args.seed is not None:
        data["seed"] = args.seed
        changed = True
    if args.k is not None:
        data["robust"]["k"] = args.k
        changed = True
    if args.tau is not None:
        data["robust"]["tau"] = args.tau
        changed = True
    return scenario_from_dict(data) if changed else scenario


def _cmd_design(args) -> int:
    scenario = _apply_overrides(parse_scenario(args.scenario), args)
    artifact = run_design(scenario)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{scenario.name}_{scenario.mode}"
    artifact_path = out_dir / f"{stem}.json"
    artifact_path.write_text(artifact.to_json(), encoding="utf-8")
    written = [artifact_path]
    if args.svg:
        problem = build_problem(scenario)
        svg_path = out_dir / f"{stem}.svg"
        render_svg(problem.topology, np.array(artifact.result["theta"]), svg_path)
        written.append(svg_path)

    res = artifact.result
    cert = artifact.certificate
    print(
        f"{scenario.name} [{scenario.mode}] objective={res['objective']} "
        f"loss={res['loss']} active_edges={res['active_edge_count']} "
        f"certified(k={cert['k']})={cert['certified']}"
    )
    for path in written:
        print(f"wrote {path}")
    if not res["converged"] or not res["feasible"]:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = parse_scenario(args.scenario)
    problem = build_problem(scenario)
    m = problem.topology.n_edges
    if m > BRUTE_FORCE_MAX_EDGES:
        raise ScenarioValidationError(
            f"verify needs at most {BRUTE_FORCE_MAX_EDGES} edges, scenario has {m}"
        )
    heuristic = design_sparse(
        problem.topology, problem.moment, problem.costs, problem.anneal, problem.barrier
    )
    oracle = brute_force_design(
        problem.topology,
        problem.moment,
        problem.costs,
        BarrierSettings(zeta_min=1e-8),
    )
    report = OracleReport.compare(
        instance=f"{scenario.name}:{scenario.input_hash[:12]}",
        oracle_value=oracle.value,
        oracle_support=oracle.support,
        heuristic_value=heuristic.true_objective,
        heuristic_support=np.flatnonzero(heuristic.active),
    )
    text = canonical_json(report.to_dict()) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    print(
        f"oracle={report.oracle_value:.6g} heuristic={report.heuristic_value:.6g} "
        f"gap={report.relative_gap:.3%} support_match={report.support_match}"
    )
    return EXIT_OK


def _parse_id_list(text: str, what: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ScenarioValidationError(f"{what}: expected comma-separated ids") from exc


def _cmd_grid(args) -> int:
    generators = _parse_id_list(args.generators, "--generators")
    consumers = (
        "rest" if args.consumers == "rest" else _parse_id_list(args.consumers, "--consumers")
    )
    data = {
        "schema_version": 1,
        "name": args.name or f"grid{args.w}",
        "seed": args.seed,
        "mode": args.mode,
        "topology": {"grid": {"w": args.w, "diagonals": bool(args.diagonals)}},
        "roles": {"generators": generators, "consumers": consumers},
        "loads": {"consumer_mean": args.mean, "consumer_std": args.std},
        "costs": {"alpha_per_length_sq": args.alpha, "beta_per_length": args.beta},
    }
    scenario = scenario_from_dict(data)
    text = canonical_json(scenario.to_jsonable()) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleRobustnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
