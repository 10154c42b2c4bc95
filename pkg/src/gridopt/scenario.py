"""Scenario files, design artifacts, and the end-to-end run driver.

Scenarios are strict UTF-8 JSON: unknown fields are rejected, every default
is resolved at parse time, and serialization is canonical (sorted keys,
17-significant-digit decimals) so identical runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import network
from .convex import BarrierSettings, ConvexSolveResult, minimize_penalized
from .errors import ScenarioValidationError
from .network import CostModel, LoadModel, NetworkTopology
from .oracles import connectivity_certify
from .resistive import ExpectedLoss
from .robust import RobustSettings, design_robust
from .sparse import AnnealSchedule, SparseDesignResult, design_sparse, prune

SCHEMA_VERSION = 1
MODES = ("convex", "sparse", "robust")


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------


def _format_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError("non-finite numbers are not serializable; map them first")
    text = format(float(x), ".17g")
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


def canonical_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    pad = " " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [canonical_json(v, indent) for v in obj]
        return "[" + ", ".join(items) + "]"
    if isinstance(obj, dict):
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError("JSON object keys must be strings")
            parts.append(
                f"{pad}  {json.dumps(key)}: {canonical_json(obj[key], indent + 2)}"
            )
        if not parts:
            return "{}"
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# schema validation
# ---------------------------------------------------------------------------

_KINDS = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "str": lambda v: isinstance(v, str),
    "bool": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "dict": lambda v: isinstance(v, dict),
}


def _check_fields(data: dict, path: str, spec: dict) -> None:
    if not isinstance(data, dict):
        raise ScenarioValidationError(f"{path}: expected an object")
    unknown = sorted(set(data) - set(spec))
    if unknown:
        raise ScenarioValidationError(f"{path}: unknown field(s) {unknown}")
    for key, (required, kind) in spec.items():
        if key not in data:
            if required:
                raise ScenarioValidationError(f"{path}.{key}: missing required field")
            continue
        if kind is not None and not _KINDS[kind](data[key]):
            raise ScenarioValidationError(f"{path}.{key}: expected {kind}")


def _int_list(values, path: str) -> list[int]:
    out = []
    for i, v in enumerate(values):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ScenarioValidationError(f"{path}[{i}]: expected integer")
        out.append(v)
    return out


def _number_list(values, path: str) -> list[float]:
    out = []
    for i, v in enumerate(values):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ScenarioValidationError(f"{path}[{i}]: expected number")
        out.append(float(v))
    return out


# ---------------------------------------------------------------------------
# scenario model
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    """A fully resolved design scenario; every field is explicit."""

    name: str
    seed: int
    mode: str
    topology: dict
    roles: dict
    loads: dict
    costs: dict
    barrier: dict
    anneal: dict
    robust: dict
    schema_version: int = SCHEMA_VERSION

    def to_jsonable(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "seed": self.seed,
            "mode": self.mode,
            "topology": self.topology,
            "roles": self.roles,
            "loads": self.loads,
            "costs": self.costs,
            "barrier": self.barrier,
            "anneal": self.anneal,
            "robust": self.robust,
        }

    @property
    def input_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_jsonable()).encode()).hexdigest()


def _resolve_topology(spec: dict) -> tuple[dict, NetworkTopology]:
    _check_fields(
        spec,
        "topology",
        {"grid": (False, "dict"), "nodes": (False, "list"), "edges": (False, "list")},
    )
    if "grid" in spec:
        if "nodes" in spec or "edges" in spec:
            raise ScenarioValidationError(
                "topology: give either a grid spec or explicit nodes/edges"
            )
        _check_fields(
            spec["grid"],
            "topology.grid",
            {"w": (True, "int"), "diagonals": (False, "bool")},
        )
        w = spec["grid"]["w"]
        if w < 1:
            raise ScenarioValidationError("topology.grid.w: must be >= 1")
        diagonals = spec["grid"].get("diagonals", False)
        topo = network.build_grid_network(w, include_diagonals=diagonals)
        return {"grid": {"w": w, "diagonals": diagonals}}, topo
    if "nodes" not in spec or "edges" not in spec:
        raise ScenarioValidationError("topology: needs a grid spec or nodes and edges")
    nodes = []
    for i, nd in enumerate(spec["nodes"]):
        _check_fields(
            nd,
            f"topology.nodes[{i}]",
            {"id": (True, "int"), "x": (True, "number"), "y": (True, "number")},
        )
        nodes.append(network.Node(id=nd["id"], x=float(nd["x"]), y=float(nd["y"])))
    edges = []
    canon_edges = []
    for i, ed in enumerate(spec["edges"]):
        _check_fields(
            ed,
            f"topology.edges[{i}]",
            {"u": (True, "int"), "v": (True, "int"), "length": (False, "number")},
        )
        u, v = ed["u"], ed["v"]
        if not (0 <= u < len(nodes) and 0 <= v < len(nodes)):
            raise ScenarioValidationError(f"topology.edges[{i}]: endpoint out of range")
        length = ed.get("length")
        if length is None:
            a, b = nodes[u], nodes[v]
            length = float(np.hypot(a.x - b.x, a.y - b.y))
        if not length > 0:
            raise ScenarioValidationError(f"topology.edges[{i}]: length must be > 0")
        edges.append(network.Edge(id=i, u=u, v=v, length=float(length)))
        canon_edges.append({"u": u, "v": v, "length": float(length)})
    try:
        topo = NetworkTopology(tuple(nodes), tuple(edges))
    except ValueError as exc:
        raise ScenarioValidationError(f"topology: {exc}") from exc
    canon_nodes = [{"id": nd.id, "x": nd.x, "y": nd.y} for nd in nodes]
    return {"nodes": canon_nodes, "edges": canon_edges}, topo


def _resolve_roles(spec: dict, topo: NetworkTopology) -> tuple[dict, NetworkTopology]:
    _check_fields(
        spec, "roles", {"generators": (True, "list"), "consumers": (False, None)}
    )
    generators = _int_list(spec["generators"], "roles.generators")
    if not generators:
        raise ScenarioValidationError("roles.generators: at least one generator")
    consumers_spec = spec.get("consumers", "rest")
    if consumers_spec == "rest":
        consumers = [i for i in range(topo.n_nodes) if i not in set(generators)]
    elif isinstance(consumers_spec, list):
        consumers = _int_list(consumers_spec, "roles.consumers")
    else:
        raise ScenarioValidationError('roles.consumers: expected "rest" or a list')
    try:
        roled = topo.with_roles(generators=generators, consumers=consumers)
    except (ValueError, IndexError) as exc:
        raise ScenarioValidationError(f"roles: {exc}") from exc
    canon = {"generators": sorted(generators), "consumers": sorted(consumers)}
    return canon, roled


def _resolve_loads(spec: dict, topo: NetworkTopology) -> tuple[dict, LoadModel]:
    _check_fields(
        spec,
        "loads",
        {
            "consumer_mean": (False, "number"),
            "consumer_std": (False, "number"),
            "means": (False, "list"),
            "stds": (False, "list"),
        },
    )
    rule = "consumer_mean" in spec or "consumer_std" in spec
    explicit = "means" in spec or "stds" in spec
    if rule and explicit:
        raise ScenarioValidationError("loads: give either rule-based or explicit loads")
    if rule:
        mean = float(spec.get("consumer_mean", -1.0))
        std = float(spec.get("consumer_std", 0.0))
        if mean > 0:
            raise ScenarioValidationError("loads.consumer_mean: consumers draw power (<= 0)")
        if std < 0:
            raise ScenarioValidationError("loads.consumer_std: must be >= 0")
        load = network.consumer_loads(topo, mean=mean, std=std)
        canon = {"consumer_mean": mean, "consumer_std": std}
    else:
        if "means" not in spec or "stds" not in spec:
            raise ScenarioValidationError("loads: explicit form needs means and stds")
        means = _number_list(spec["means"], "loads.means")
        stds = _number_list(spec["stds"], "loads.stds")
        if len(means) != topo.n_nodes or len(stds) != topo.n_nodes:
            raise ScenarioValidationError(
                f"loads: means/stds must list all {topo.n_nodes} nodes"
            )
        try:
            load = LoadModel(np.array(means), np.array(stds))
            load.validate_against(topo)
        except ValueError as exc:
            raise ScenarioValidationError(f"loads: {exc}") from exc
        canon = {"means": means, "stds": stds}
    for c in topo.consumers:
        if load.means[c] == 0.0 and load.stds[c] == 0.0:
            raise ScenarioValidationError(
                f"loads: consumer node {c} has no load specified"
            )
    return canon, load


def _resolve_costs(spec: dict, topo: NetworkTopology) -> tuple[dict, CostModel]:
    _check_fields(
        spec,
        "costs",
        {
            "alpha_per_length_sq": (False, "number"),
            "beta_per_length": (False, "number"),
            "trade_off": (False, "number"),
            "alpha": (False, "list"),
            "beta": (False, "list"),
        },
    )
    rule = any(k in spec for k in ("alpha_per_length_sq", "beta_per_length", "trade_off"))
    explicit = "alpha" in spec or "beta" in spec
    if rule and explicit:
        raise ScenarioValidationError("costs: give either rule-based or explicit costs")
    if explicit:
        if "alpha" not in spec:
            raise ScenarioValidationError("costs: explicit form needs alpha")
        alpha = _number_list(spec["alpha"], "costs.alpha")
        beta = _number_list(spec.get("beta", [0.0] * len(alpha)), "costs.beta")
        if len(alpha) != topo.n_edges or len(beta) != topo.n_edges:
            raise ScenarioValidationError(
                f"costs: alpha/beta must list all {topo.n_edges} edges"
            )
        try:
            costs = CostModel(np.array(alpha), np.array(beta))
            costs.validate_against(topo)
        except ValueError as exc:
            raise ScenarioValidationError(f"costs: {exc}") from exc
        canon = {"alpha": alpha, "beta": beta}
    else:
        a = float(spec.get("alpha_per_length_sq", 1.0))
        b = float(spec.get("beta_per_length", 0.0))
        t = float(spec.get("trade_off", 1.0))
        if a < 0 or b < 0 or t <= 0:
            raise ScenarioValidationError("costs: coefficients out of range")
        costs = CostModel.per_length(
            topo, alpha_per_length_sq=a, beta_per_length=b, trade_off=t
        )
        canon = {"alpha_per_length_sq": a, "beta_per_length": b, "trade_off": t}
    return canon, costs


_BARRIER_FIELDS = {f.name: f for f in dataclasses.fields(BarrierSettings)}
_ANNEAL_FIELDS = {
    f.name: f for f in dataclasses.fields(AnnealSchedule) if f.name != "seed"
}
_ROBUST_FIELDS = {f.name: f for f in dataclasses.fields(RobustSettings)}


def _resolve_settings(spec: dict, path: str, fields: dict, cls, **extra):
    _check_fields(spec, path, {name: (False, None) for name in fields})
    kwargs = dict(extra)
    for name in fields:
        if name in spec:
            kwargs[name] = spec[name]
    try:
        settings = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"{path}: {exc}") from exc
    canon = {name: getattr(settings, name) for name in fields}
    return canon, settings


def scenario_from_dict(data: dict) -> Scenario:
    _check_fields(
        data,
        "scenario",
        {
            "schema_version": (False, "int"),
            "name": (True, "str"),
            "seed": (False, "int"),
            "mode": (True, "str"),
            "topology": (True, "dict"),
            "roles": (True, "dict"),
            "loads": (True, "dict"),
            "costs": (True, "dict"),
            "barrier": (False, "dict"),
            "anneal": (False, "dict"),
            "robust": (False, "dict"),
        },
    )
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioValidationError(f"schema_version: unsupported version {version}")
    mode = data["mode"]
    if mode not in MODES:
        raise ScenarioValidationError(f"mode: expected one of {MODES}, got {mode!r}")
    seed = data.get("seed", 0)

    topo_canon, topo = _resolve_topology(data["topology"])
    roles_canon, topo = _resolve_roles(data["roles"], topo)
    loads_canon, _ = _resolve_loads(data["loads"], topo)
    costs_canon, _ = _resolve_costs(data["costs"], topo)
    barrier_canon, _ = _resolve_settings(
        data.get("barrier", {}), "barrier", _BARRIER_FIELDS, BarrierSettings
    )
    anneal_canon, _ = _resolve_settings(
        data.get("anneal", {}), "anneal", _ANNEAL_FIELDS, AnnealSchedule, seed=seed
    )
    robust_canon, _ = _resolve_settings(
        data.get("robust", {}), "robust", _ROBUST_FIELDS, RobustSettings
    )
    return Scenario(
        name=data["name"],
        seed=seed,
        mode=mode,
        topology=topo_canon,
        roles=roles_canon,
        loads=loads_canon,
        costs=costs_canon,
        barrier=barrier_canon,
        anneal=anneal_canon,
        robust=robust_canon,
    )


def parse_scenario(path) -> Scenario:
    """Load, validate and fully resolve a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioValidationError(f"{path}: no such file")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(canonical_json(scenario.to_jsonable()) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# problem assembly and the design driver
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    """Solver-ready inputs assembled from a scenario."""

    base_topology: NetworkTopology
    topology: NetworkTopology
    moment: object
    load: LoadModel
    costs: CostModel
    barrier: BarrierSettings
    anneal: AnnealSchedule
    robust: RobustSettings


def build_problem(scenario: Scenario) -> Problem:
    _, topo = _resolve_topology(scenario.topology)
    _, topo = _resolve_roles(scenario.roles, topo)
    _, load = _resolve_loads(scenario.loads, topo)
    _, costs = _resolve_costs(scenario.costs, topo)
    _, barrier = _resolve_settings(
        scenario.barrier, "barrier", _BARRIER_FIELDS, BarrierSettings
    )
    _, anneal = _resolve_settings(
        scenario.anneal, "anneal", _ANNEAL_FIELDS, AnnealSchedule, seed=scenario.seed
    )
    _, robust = _resolve_settings(
        scenario.robust, "robust", _ROBUST_FIELDS, RobustSettings
    )

    needs_virtual = len(topo.generators) > 1 or (
        scenario.mode == "robust" and robust.failable in ("virtual", "all")
    )
    if needs_virtual:
        augmented, moment = network.augment_virtual_generator(topo, load)
        costs = costs.extended_to(augmented)
        solve_topo = augmented
    else:
        moment = network.moment_with_single_source(topo, load)
        solve_topo = topo
    return Problem(
        base_topology=topo,
        topology=solve_topo,
        moment=moment,
        load=load,
        costs=costs,
        barrier=barrier,
        anneal=anneal,
        robust=robust,
    )


@dataclass
class DesignArtifact:
    """Serialized outcome of one design run; deterministic given (scenario, seed)."""

    scenario_name: str
    input_hash: str
    mode: str
    seed: int
    result: dict
    certificate: dict
    diagnostics: dict
    schema_version: int = SCHEMA_VERSION

    def to_jsonable(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "scenario_name": self.scenario_name,
            "input_hash": self.input_hash,
            "mode": self.mode,
            "seed": self.seed,
            "result": self.result,
            "certificate": self.certificate,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_jsonable()) + "\n"


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def _records_jsonable(records) -> list[dict]:
    out = []
    for r in records:
        out.append(
            {
                "gamma": r.gamma,
                "iteration": r.iteration,
                "objective": _finite_or_none(r.objective),
                "smoothed_objective": _finite_or_none(r.smoothed_objective),
                "loss": _finite_or_none(r.loss),
                "newton_iterations": r.newton_iterations,
                "event": r.event,
                "worst_case": None if r.worst_case is None else _finite_or_none(r.worst_case),
            }
        )
    return out


def run_design(scenario: Scenario) -> DesignArtifact:
    """Execute the scenario's design mode end to end.

    Always records the loss, the linear and step costs, the active edge set
    and a connectivity certificate for the pruned design.
    """
    problem = build_problem(scenario)
    topo = problem.topology
    mode = scenario.mode

    if mode == "convex":
        conv: ConvexSolveResult = minimize_penalized(
            ExpectedLoss(topo, problem.moment), problem.costs.alpha, problem.barrier
        )
        theta = conv.theta
        active = prune(theta, topo.real_edge_mask)
        result = {
            "objective": _finite_or_none(conv.objective),
            "loss": _finite_or_none(conv.loss),
            "linear_cost": conv.cost,
            "step_cost": float(problem.costs.beta @ active),
            "converged": conv.converged,
            "feasible": True,
        }
        diagnostics = {
            "newton_iterations": conv.iterations,
            "final_zeta": conv.final_zeta,
            "restarts": conv.restarts,
        }
        cert_k = 0
    elif mode == "sparse":
        res: SparseDesignResult = design_sparse(
            topo, problem.moment, problem.costs, problem.anneal, problem.barrier
        )
        theta = res.theta
        active = res.active
        result = {
            "objective": _finite_or_none(res.true_objective),
            "loss": _finite_or_none(res.true_loss),
            "linear_cost": res.linear_cost,
            "step_cost": res.step_cost,
            "converged": res.converged,
            "feasible": res.feasible,
        }
        diagnostics = {
            "gamma_trace": res.gamma_trace,
            "mm_records": _records_jsonable(res.records),
            "convex_stage_objective": _finite_or_none(res.convex_result.objective),
        }
        cert_k = 0
    else:
        res = design_robust(
            topo,
            problem.moment,
            problem.costs,
            problem.robust,
            problem.anneal,
            problem.barrier,
        )
        theta = res.theta
        active = res.active
        result = {
            "objective": _finite_or_none(res.true_objective),
            "loss": _finite_or_none(res.true_loss),
            "linear_cost": res.linear_cost,
            "step_cost": res.step_cost,
            "converged": res.converged,
            "feasible": res.feasible,
        }
        diagnostics = {
            "gamma_trace": res.gamma_trace,
            "mm_records": _records_jsonable(res.records),
            "convex_stage_objective": _finite_or_none(res.convex_result.objective),
            "robust": res.diagnostics,
        }
        cert_k = problem.robust.k

    real = topo.real_edge_mask
    active_real = active & real
    certified, witness = connectivity_certify(
        topo,
        active_real,
        problem.base_topology.consumers,
        problem.base_topology.generators,
        cert_k,
    )
    certificate = {
        "k": cert_k,
        "certified": bool(certified),
        "witness": None
        if witness is None
        else {"consumer": witness[0], "cut": witness[1]},
    }
    result["theta"] = [float(t) for t in theta]
    result["active_edges"] = [int(i) for i in np.flatnonzero(active_real)]
    result["active_edge_count"] = int(active_real.sum())

    return DesignArtifact(
        scenario_name=scenario.name,
        input_hash=scenario.input_hash,
        mode=mode,
        seed=scenario.seed,
        result=result,
        certificate=certificate,
        diagnostics=diagnostics,
    )
