"""Candidate network model: topology, node roles, load statistics and costs.

The decision variable of every design problem lives on the edges of an
over-complete candidate graph. This module builds that graph (including the
grid generators used by the demos), attaches load statistics, and constructs
the second-moment matrix ``B`` of the random injections, including the
virtual-generator augmentation used for multi-generator networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

CONSUMER = "consumer"
TRANSMISSION = "transmission"
GENERATOR = "generator"
VIRTUAL_GENERATOR = "virtual_generator"

ROLES = (CONSUMER, TRANSMISSION, GENERATOR, VIRTUAL_GENERATOR)

EDGE_REAL = "real"
EDGE_VIRTUAL = "virtual"

# Cost per unit conductance on virtual lines, relative to the cheapest real
# line. Small enough that the solver assigns virtual lines very large
# conductance, i.e. near-free transfer from the virtual generator.
VIRTUAL_ALPHA_FACTOR = 1e-6


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    role: str = TRANSMISSION

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown node role {self.role!r}")


@dataclass(frozen=True)
class Edge:
    id: int
    u: int
    v: int
    length: float
    kind: str = EDGE_REAL

    def __post_init__(self) -> None:
        if self.kind not in (EDGE_REAL, EDGE_VIRTUAL):
            raise ValueError(f"unknown edge kind {self.kind!r}")
        if not self.length > 0:
            raise ValueError(f"edge {self.id}: length must be > 0")


@dataclass(frozen=True)
class NetworkTopology:
    """Immutable undirected candidate network.

    Node ids are dense integers ``0..n-1``. When a virtual generator is
    present it is the last node, so real-node indexing is stable across the
    augmentation. Parallel edges are rejected unless ``allow_parallel`` is
    set; a handful of degenerate test networks (parallel conductors between
    one node pair) need them, real scenarios do not.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    allow_parallel: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        ids = [nd.id for nd in self.nodes]
        if ids != list(range(len(ids))):
            raise ValueError("node ids must be dense integers 0..n-1, in order")
        virtuals = [nd.id for nd in self.nodes if nd.role == VIRTUAL_GENERATOR]
        if len(virtuals) > 1:
            raise ValueError("at most one virtual generator node is allowed")
        if virtuals and virtuals[0] != len(ids) - 1:
            raise ValueError("the virtual generator must be the last node")

        n = len(self.nodes)
        seen_pairs = set()
        for e in self.edges:
            if not (0 <= e.u < n and 0 <= e.v < n):
                raise ValueError(f"edge {e.id}: endpoint out of range")
            if e.u == e.v:
                raise ValueError(f"edge {e.id}: self-loops are not allowed")
            pair = (min(e.u, e.v), max(e.u, e.v))
            if pair in seen_pairs and not self.allow_parallel:
                raise ValueError(f"edge {e.id}: duplicate edge for node pair {pair}")
            seen_pairs.add(pair)
            if e.kind == EDGE_VIRTUAL:
                roles = {self.nodes[e.u].role, self.nodes[e.v].role}
                if roles != {VIRTUAL_GENERATOR, GENERATOR}:
                    raise ValueError(
                        f"edge {e.id}: virtual edges must join the virtual "
                        "generator to a generator"
                    )
        if [e.id for e in self.edges] != list(range(len(self.edges))):
            raise ValueError("edge ids must be dense integers 0..m-1, in order")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence_matrix(self) -> np.ndarray:
        """Signed node-edge incidence matrix, one column ±(e_u - e_v) per edge."""
        a = np.zeros((self.n_nodes, self.n_edges))
        for e in self.edges:
            a[e.u, e.id] = 1.0
            a[e.v, e.id] = -1.0
        a.setflags(write=False)
        return a

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        s = np.array([e.length for e in self.edges])
        s.setflags(write=False)
        return s

    @cached_property
    def real_edge_mask(self) -> np.ndarray:
        mask = np.array([e.kind == EDGE_REAL for e in self.edges])
        mask.setflags(write=False)
        return mask

    def nodes_with_role(self, role: str) -> list[int]:
        return [nd.id for nd in self.nodes if nd.role == role]

    @property
    def generators(self) -> list[int]:
        return self.nodes_with_role(GENERATOR)

    @property
    def consumers(self) -> list[int]:
        return self.nodes_with_role(CONSUMER)

    @property
    def virtual_generator(self) -> int | None:
        ids = self.nodes_with_role(VIRTUAL_GENERATOR)
        return ids[0] if ids else None

    def with_roles(self, generators=(), consumers=(), default: str = TRANSMISSION) -> "NetworkTopology":
        """Return a copy with the given role assignment.

        Nodes listed in neither set get ``default``. A node cannot be both a
        generator and a consumer.
        """
        gset, cset = set(generators), set(consumers)
        if gset & cset:
            raise ValueError(f"nodes {sorted(gset & cset)} assigned two roles")
        nodes = []
        for nd in self.nodes:
            if nd.role == VIRTUAL_GENERATOR:
                raise ValueError("cannot re-role an augmented topology")
            role = GENERATOR if nd.id in gset else CONSUMER if nd.id in cset else default
            nodes.append(replace(nd, role=role))
        return NetworkTopology(tuple(nodes), self.edges, self.allow_parallel)


def build_grid_network(w: int, include_diagonals: bool = False) -> NetworkTopology:
    """Build a ``w x w`` grid of transmission nodes on unit spacing.

    Nearest neighbours are joined by length-1 edges; with
    ``include_diagonals`` second-nearest neighbours are joined by length
    sqrt(2) edges (a king graph). Node ``r*w + c`` sits at ``(x=c, y=r)``.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    nodes = tuple(
        Node(id=r * w + c, x=float(c), y=float(r)) for r in range(w) for c in range(w)
    )
    edges: list[Edge] = []

    def add(u: int, v: int, length: float) -> None:
        edges.append(Edge(id=len(edges), u=u, v=v, length=length))

    for r in range(w):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                add(i, i + 1, 1.0)
            if r + 1 < w:
                add(i, i + w, 1.0)
    if include_diagonals:
        diag = float(np.sqrt(2.0))
        for r in range(w - 1):
            for c in range(w - 1):
                i = r * w + c
                add(i, i + w + 1, diag)        # down-right
                add(i + 1, i + w, diag)        # down-left
    return NetworkTopology(nodes, tuple(edges))


def induced_subnetwork(
    topology: NetworkTopology, edge_mask: np.ndarray, extra_nodes=()
) -> tuple[NetworkTopology, np.ndarray]:
    """Subnetwork on the masked edges plus any extra nodes.

    Returns the reduced topology (node/edge ids renumbered densely,
    original order preserved) and the original ids of its nodes.
    """
    edge_mask = np.asarray(edge_mask, dtype=bool)
    keep = np.zeros(topology.n_nodes, dtype=bool)
    keep[list(extra_nodes)] = True
    for e in topology.edges:
        if edge_mask[e.id]:
            keep[e.u] = keep[e.v] = True
    old_ids = np.flatnonzero(keep)
    new_id = {int(old): new for new, old in enumerate(old_ids)}
    nodes = tuple(
        replace(topology.nodes[old], id=new) for new, old in enumerate(old_ids)
    )
    edges = []
    for e in topology.edges:
        if edge_mask[e.id]:
            edges.append(
                replace(e, id=len(edges), u=new_id[e.u], v=new_id[e.v])
            )
    return NetworkTopology(nodes, tuple(edges), topology.allow_parallel), old_ids


@dataclass(frozen=True)
class LoadModel:
    """Per-node load statistics for non-generator nodes.

    ``means`` are the expected drawn powers (<= 0 at consumers, 0 at
    transmission nodes), ``stds`` the per-node standard deviations. An
    optional full covariance may be supplied for cross-correlated loads; it
    must be zero on generator rows/columns and its diagonal must equal
    ``stds**2``.
    """

    means: np.ndarray
    stds: np.ndarray
    covariance: np.ndarray | None = None

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=float)
        stds = np.asarray(self.stds, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        if means.shape != stds.shape or means.ndim != 1:
            raise ValueError("means and stds must be 1-d arrays of equal length")
        if np.any(stds < 0):
            raise ValueError("standard deviations must be >= 0")
        if self.covariance is not None:
            cov = np.asarray(self.covariance, dtype=float)
            object.__setattr__(self, "covariance", cov)
            n = means.size
            if cov.shape != (n, n):
                raise ValueError("covariance must be n x n")
            if not np.allclose(cov, cov.T):
                raise ValueError("covariance must be symmetric")
            if not np.allclose(np.diag(cov), stds**2):
                raise ValueError("covariance diagonal must equal stds**2")

    @property
    def n_nodes(self) -> int:
        return self.means.size

    def validate_against(self, topology: NetworkTopology) -> None:
        if self.n_nodes != topology.n_nodes:
            raise ValueError("load model size does not match topology")
        for nd in topology.nodes:
            if nd.role == TRANSMISSION and (
                self.means[nd.id] != 0.0 or self.stds[nd.id] != 0.0
            ):
                raise ValueError(f"node {nd.id} is a transmission node but has load")
            if nd.role in (GENERATOR, VIRTUAL_GENERATOR):
                if self.means[nd.id] != 0.0 or self.stds[nd.id] != 0.0:
                    raise ValueError(
                        f"node {nd.id} is a generator; its injection is implied "
                        "by balance, set mean/std to 0"
                    )
                if self.covariance is not None and (
                    np.any(self.covariance[nd.id, :]) or np.any(self.covariance[:, nd.id])
                ):
                    raise ValueError("covariance rows for generators must be zero")


def consumer_loads(
    topology: NetworkTopology, mean: float = -1.0, std: float = 1.0 / 3.0
) -> LoadModel:
    """Uniform i.i.d. loads at every consumer node, zero elsewhere."""
    means = np.zeros(topology.n_nodes)
    stds = np.zeros(topology.n_nodes)
    for i in topology.consumers:
        means[i] = mean
        stds[i] = std
    load = LoadModel(means, stds)
    load.validate_against(topology)
    return load


@dataclass(frozen=True)
class CurrentMoment:
    """Second moment ``B = <b b^T>`` of the random injection vector.

    Validated to be symmetric PSD with zero row sums (total injected power
    is zero in every realization).
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", b)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("B must be square")
        if not np.allclose(b, b.T):
            raise ValueError("B must be symmetric")
        scale = np.abs(b).max() if b.size else 0.0
        if scale > 0:
            row_sums = b.sum(axis=1)
            if np.abs(row_sums).max() > 1e-10 * scale:
                raise ValueError("B must have zero row sums (balanced injections)")
            min_eig = np.linalg.eigvalsh(b)[0]
            if min_eig < -1e-10 * np.linalg.norm(b, 2):
                raise ValueError("B must be positive semidefinite")

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]


def single_generator_moment(load: LoadModel, generator: int) -> CurrentMoment:
    """Second-moment matrix when one generator balances all random loads.

    The generator injection is forced to ``-sum(b_i)`` in every realization,
    which fills its row/column of ``B`` with the negated column sums of the
    load moment ``bbar bbar^T + Sigma`` and its diagonal entry with
    ``(sum bbar)^2 + 1^T Sigma 1``.
    """
    n = load.n_nodes
    if not 0 <= generator < n:
        raise ValueError("generator id out of range")
    if load.means[generator] != 0.0 or load.stds[generator] != 0.0:
        raise ValueError("the generator node must carry no specified load")

    bbar = np.array(load.means, dtype=float)
    bbar[generator] = -(bbar.sum() - bbar[generator])

    if load.covariance is not None:
        sigma = np.array(load.covariance, dtype=float)
    else:
        sigma = np.diag(load.stds.astype(float) ** 2)
    sigma[generator, :] = 0.0
    sigma[:, generator] = 0.0
    col_sums = sigma.sum(axis=0)
    sigma[generator, :] = -col_sums
    sigma[:, generator] = -col_sums
    sigma[generator, generator] = col_sums.sum()

    return CurrentMoment(np.outer(bbar, bbar) + sigma)


def moment_with_single_source(
    topology: NetworkTopology, load: LoadModel
) -> CurrentMoment:
    """Moment matrix for a topology whose only source is its one generator."""
    load.validate_against(topology)
    gens = topology.generators
    if topology.virtual_generator is not None:
        raise ValueError("augmented topologies already carry their moment")
    if len(gens) != 1:
        raise ValueError(f"expected exactly one generator, found {len(gens)}")
    return single_generator_moment(load, gens[0])


def augment_virtual_generator(
    topology: NetworkTopology, load: LoadModel
) -> tuple[NetworkTopology, CurrentMoment]:
    """Attach a virtual generator node feeding every real generator.

    The virtual node (index ``n``, appended last) is joined to each real
    generator by a virtual edge. For the moment construction the real
    generators are treated as plain transmission nodes and the virtual node
    is the sole source, so the Kirchhoff flow in the augmented network
    realizes the loss-optimal dispatch across generators.
    """
    load.validate_against(topology)
    gens = topology.generators
    if topology.virtual_generator is not None:
        raise ValueError("topology already has a virtual generator")
    if not gens:
        raise ValueError("need at least one generator to augment")

    n = topology.n_nodes
    cx = float(np.mean([nd.x for nd in topology.nodes]))
    cy = float(np.mean([nd.y for nd in topology.nodes]))
    nodes = topology.nodes + (Node(id=n, x=cx, y=cy, role=VIRTUAL_GENERATOR),)
    edges = list(topology.edges)
    for g in gens:
        edges.append(Edge(id=len(edges), u=g, v=n, length=1.0, kind=EDGE_VIRTUAL))
    augmented = NetworkTopology(nodes, tuple(edges), topology.allow_parallel)

    means = np.concatenate([load.means, [0.0]])
    stds = np.concatenate([load.stds, [0.0]])
    cov = None
    if load.covariance is not None:
        cov = np.zeros((n + 1, n + 1))
        cov[:n, :n] = load.covariance
    moment = single_generator_moment(LoadModel(means, stds, cov), generator=n)
    return augmented, moment


@dataclass(frozen=True)
class CostModel:
    """Per-edge build costs: linear coefficients and fixed charges.

    ``alpha[l]`` is the cost per unit conductance on edge ``l`` (any
    efficiency/cost trade-off multiplier is folded in); ``beta[l]`` is the
    fixed charge paid iff the edge is built at all. Virtual edges must be
    nearly free (tiny ``alpha``, zero ``beta``) so they never distort the
    design of the real network.
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-d arrays of equal length")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise ValueError("cost coefficients must be >= 0")

    @property
    def n_edges(self) -> int:
        return self.alpha.size

    def validate_against(self, topology: NetworkTopology) -> None:
        if self.n_edges != topology.n_edges:
            raise ValueError("cost model size does not match topology")
        mask = topology.real_edge_mask
        if not mask.all():
            real_min = self.alpha[mask].min()
            if np.any(self.beta[~mask] != 0.0):
                raise ValueError("virtual edges must have zero fixed charge")
            if np.any(self.alpha[~mask] > 1e-3 * real_min):
                raise ValueError("virtual edges must be nearly free to build")

    @classmethod
    def per_length(
        cls,
        topology: NetworkTopology,
        alpha_per_length_sq: float = 1.0,
        beta_per_length: float = 0.0,
        trade_off: float = 1.0,
    ) -> "CostModel":
        """Length-based coefficients: ``alpha = s**2`` scale, ``beta = s`` scale.

        Conductor volume grows as length squared for fixed conductance,
        right-of-way / towers grow linearly, hence the two exponents. On a
        unit grid with diagonals this is the familiar (1, 2) and (1, sqrt 2)
        pattern of the demos. ``trade_off`` is the build-vs-operating-cost
        multiplier, folded directly into alpha.
        """
        s = topology.edge_lengths
        mask = topology.real_edge_mask
        alpha = trade_off * alpha_per_length_sq * s**2
        beta = beta_per_length * s
        if not mask.all():
            alpha[~mask] = VIRTUAL_ALPHA_FACTOR * alpha[mask].min()
            beta[~mask] = 0.0
        model = cls(alpha, beta)
        model.validate_against(topology)
        return model

    @classmethod
    def from_conductor_physics(
        cls,
        topology: NetworkTopology,
        price_per_volume: float,
        conductivity: float,
        trade_off: float = 1.0,
    ) -> "CostModel":
        """Material cost of conductor: ``alpha = c / g * s**2`` per edge."""
        return cls.per_length(
            topology,
            alpha_per_length_sq=price_per_volume / conductivity,
            beta_per_length=0.0,
            trade_off=trade_off,
        )

    def extended_to(self, augmented: NetworkTopology) -> "CostModel":
        """Extend a real-edge cost model over the virtual edges of ``augmented``."""
        m_extra = augmented.n_edges - self.n_edges
        if m_extra < 0:
            raise ValueError("augmented topology has fewer edges than the model")
        alpha_v = VIRTUAL_ALPHA_FACTOR * self.alpha.min() if m_extra else 0.0
        alpha = np.concatenate([self.alpha, np.full(m_extra, alpha_v)])
        beta = np.concatenate([self.beta, np.zeros(m_extra)])
        model = CostModel(alpha, beta)
        model.validate_against(augmented)
        return model
