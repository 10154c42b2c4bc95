"""Independent verification oracles for the design heuristics.

Nothing here shares code paths with the methods it checks: subgraph
enumeration wraps only the convex solver, derivatives are differenced
numerically, dispatch optimality is a KKT solve, and connectivity is
certified by augmenting-path max-flow.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ._threads import single_threaded_blas
from .convex import BarrierSettings, minimize_penalized
from .errors import DisconnectedNetworkError
from .network import CostModel, CurrentMoment, NetworkTopology, induced_subnetwork
from .resistive import ExpectedLoss, conductance_matrix, _regularized_factor

BRUTE_FORCE_MAX_EDGES = 16


@dataclass
class OracleReport:
    """Comparison of a heuristic design against the enumeration optimum."""

    instance: str
    oracle_value: float
    oracle_support: list[int]
    heuristic_value: float
    heuristic_support: list[int]
    relative_gap: float
    support_match: bool

    @classmethod
    def compare(
        cls,
        instance: str,
        oracle_value: float,
        oracle_support,
        heuristic_value: float,
        heuristic_support,
    ) -> "OracleReport":
        gap = (heuristic_value - oracle_value) / max(abs(oracle_value), 1e-12)
        o_sup = sorted(int(i) for i in oracle_support)
        h_sup = sorted(int(i) for i in heuristic_support)
        return cls(
            instance=instance,
            oracle_value=float(oracle_value),
            oracle_support=o_sup,
            heuristic_value=float(heuristic_value),
            heuristic_support=h_sup,
            relative_gap=float(gap),
            support_match=o_sup == h_sup,
        )

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "oracle_value": self.oracle_value,
            "oracle_support": self.oracle_support,
            "heuristic_value": self.heuristic_value,
            "heuristic_support": self.heuristic_support,
            "relative_gap": self.relative_gap,
            "support_match": self.support_match,
        }


@dataclass
class BruteForceResult:
    value: float
    support: list[int]
    theta: np.ndarray
    subsets_evaluated: int


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _connects_loaded(topology: NetworkTopology, subset: list[int], loaded) -> bool:
    if len(loaded) <= 1:
        return True
    uf = _UnionFind(topology.n_nodes)
    for l in subset:
        e = topology.edges[l]
        uf.union(e.u, e.v)
    root = uf.find(loaded[0])
    return all(uf.find(i) == root for i in loaded[1:])


def brute_force_design(
    topology: NetworkTopology,
    moment: CurrentMoment | np.ndarray,
    costs: CostModel,
    barrier: BarrierSettings | None = None,
    reverse: bool = False,
) -> BruteForceResult:
    """Global optimum of loss + linear cost + exact step cost by enumeration.

    Every edge subset that keeps the loaded nodes connected is solved as its
    own convex problem (with a tightened barrier floor) and charged the exact
    fixed cost of its edges. Only instances with at most 16 edges are
    accepted. Ties keep the first subset in enumeration order.
    """
    m = topology.n_edges
    if m > BRUTE_FORCE_MAX_EDGES:
        raise ValueError(f"enumeration over 2^{m} subsets refused (max {BRUTE_FORCE_MAX_EDGES} edges)")
    barrier = barrier or BarrierSettings(zeta_min=1e-8)
    b_full = moment.matrix if isinstance(moment, CurrentMoment) else np.asarray(moment)
    loaded = [int(i) for i in np.flatnonzero(np.abs(np.diag(b_full)) > 0)]

    best_value = np.inf
    best_subset: list[int] = []
    best_theta = np.zeros(m)
    evaluated = 0

    masks = range(2**m)
    if reverse:
        masks = reversed(masks)
    with single_threaded_blas():
        for mask_bits in masks:
            subset = [l for l in range(m) if (mask_bits >> l) & 1]
            if not _connects_loaded(topology, subset, loaded):
                continue
            if not subset:
                if loaded:
                    continue
                value, theta_sub = 0.0, np.zeros(0)
            else:
                edge_mask = np.zeros(m, dtype=bool)
                edge_mask[subset] = True
                subnet, node_ids = induced_subnetwork(
                    topology, edge_mask, extra_nodes=loaded
                )
                b_red = b_full[np.ix_(node_ids, node_ids)]
                result = minimize_penalized(
                    ExpectedLoss(subnet, b_red), costs.alpha[subset], barrier
                )
                theta_sub = result.theta
                value = result.loss + result.cost + float(costs.beta[subset].sum())
            evaluated += 1
            if value < best_value:
                best_value = value
                best_subset = subset
                best_theta = np.zeros(m)
                best_theta[subset] = theta_sub
    if not np.isfinite(best_value):
        raise DisconnectedNetworkError("no edge subset connects the loaded nodes")
    return BruteForceResult(
        value=float(best_value),
        support=best_subset,
        theta=best_theta,
        subsets_evaluated=evaluated,
    )


def finite_difference_gradient(f, theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar field over edge vectors."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= h):
        raise ValueError("finite-difference step would leave the domain")
    grad = np.empty(theta.size)
    for l in range(theta.size):
        step = np.zeros(theta.size)
        step[l] = h
        grad[l] = (f(theta + step) - f(theta - step)) / (2.0 * h)
    return grad


def finite_difference_jacobian(vf, theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of a vector field; column l differentiates theta_l."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= h):
        raise ValueError("finite-difference step would leave the domain")
    cols = []
    for l in range(theta.size):
        step = np.zeros(theta.size)
        step[l] = h
        cols.append((vf(theta + step) - vf(theta - step)) / (2.0 * h))
    return np.column_stack(cols)


def optimal_dispatch_oracle(
    topology: NetworkTopology,
    theta: np.ndarray,
    consumer_injections: np.ndarray,
    generators,
) -> float:
    """Minimum dissipation over generator dispatch balancing the given loads.

    Solves the equality-constrained quadratic exactly through its KKT
    system: minimize ``b^T K^+ b`` over the generator entries of ``b`` with
    total generation equal to total consumption.
    """
    generators = [int(g) for g in generators]
    b_c = np.asarray(consumer_injections, dtype=float)
    if b_c.shape != (topology.n_nodes,):
        raise ValueError("consumer injections must be a per-node vector")
    if any(b_c[g] != 0.0 for g in generators):
        raise ValueError("generator entries of the load vector must be zero")

    factor = _regularized_factor(conductance_matrix(topology, theta))
    selector = np.zeros((topology.n_nodes, len(generators)))
    for j, g in enumerate(generators):
        selector[g, j] = 1.0
    minv_c = factor.solve(b_c)
    minv_e = factor.solve(selector)
    quad = selector.T @ minv_e
    lin = selector.T @ minv_c

    n_g = len(generators)
    kkt = np.zeros((n_g + 1, n_g + 1))
    kkt[:n_g, :n_g] = 2.0 * quad
    kkt[:n_g, n_g] = 1.0
    kkt[n_g, :n_g] = 1.0
    rhs = np.concatenate([-2.0 * lin, [-b_c.sum()]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise DisconnectedNetworkError("dispatch KKT system is singular") from exc
    b = b_c + selector @ sol[:n_g]
    return float(b @ factor.solve(b))


class _FlowGraph:
    """Unit-capacity-style max-flow with BFS augmentation (Edmonds-Karp)."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self.edge_id: list[int] = []

    def add_arc_pair(self, u: int, v: int, cap_uv: float, cap_vu: float, edge_id: int = -1):
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap_uv)
        self.edge_id.append(edge_id)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(cap_vu)
        self.edge_id.append(edge_id)

    def _augment(self, s: int, t: int) -> float:
        prev_arc = [-1] * self.n
        prev_arc[s] = -2
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if u == t:
                break
            for a in self.adj[u]:
                v = self.to[a]
                if prev_arc[v] == -1 and self.cap[a] > 0:
                    prev_arc[v] = a
                    queue.append(v)
        if prev_arc[t] == -1:
            return 0.0
        # trace back for the bottleneck
        push = np.inf
        v = t
        while v != s:
            a = prev_arc[v]
            push = min(push, self.cap[a])
            v = self.to[a ^ 1]
        v = t
        while v != s:
            a = prev_arc[v]
            self.cap[a] -= push
            self.cap[a ^ 1] += push
            v = self.to[a ^ 1]
        return push

    def max_flow(self, s: int, t: int, limit: float) -> float:
        flow = 0.0
        while flow < limit:
            push = self._augment(s, t)
            if push == 0.0:
                break
            flow += push
        return flow

    def reachable_from(self, s: int) -> set[int]:
        seen = {s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for a in self.adj[u]:
                v = self.to[a]
                if v not in seen and self.cap[a] > 0:
                    seen.add(v)
                    queue.append(v)
        return seen


def edge_connectivity(
    n_nodes: int,
    edges,
    capacities,
    source: int,
    targets,
    limit: int,
) -> int:
    """Max flow from source to a super-sink behind the targets, up to limit."""
    graph = _FlowGraph(n_nodes + 1)
    sink = n_nodes
    for (u, v), cap in zip(edges, capacities):
        graph.add_arc_pair(u, v, cap, cap)
    for t in targets:
        graph.add_arc_pair(t, sink, float(limit), 0.0)
    return int(graph.max_flow(source, sink, float(limit)))


def connectivity_certify(
    topology: NetworkTopology,
    active: np.ndarray,
    consumers,
    generators,
    k: int,
) -> tuple[bool, tuple[int, list[int]] | None]:
    """Check k+1 edge-disjoint paths from every consumer to some generator.

    Works on the active edge set with unit capacities and a free super-sink
    behind the generators. On failure returns the violating consumer and the
    separating edge cut as a witness.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    active = np.asarray(active, dtype=bool)
    consumers = [int(c) for c in consumers]
    generators = [int(g) for g in generators]
    if not generators:
        return (False, (consumers[0], []) if consumers else None)

    need = k + 1
    for c in consumers:
        graph = _FlowGraph(topology.n_nodes + 1)
        sink = topology.n_nodes
        for e in topology.edges:
            if active[e.id]:
                graph.add_arc_pair(e.u, e.v, 1.0, 1.0, edge_id=e.id)
        for g in generators:
            graph.add_arc_pair(g, sink, float(need), 0.0)
        flow = graph.max_flow(c, sink, float(need))
        if flow < need:
            reach = graph.reachable_from(c)
            cut = sorted(
                {
                    e.id
                    for e in topology.edges
                    if active[e.id] and ((e.u in reach) != (e.v in reach))
                }
            )
            return False, (c, cut)
    return True, None
