"""Design against line and generator failures.

A failure scenario zeroes the conductance of exactly ``k`` failable edges;
the worst-case dissipation over all scenarios is convex but non-smooth, so
optimization runs on its Gibbs soft-max smoothing

    tau * log sum_z exp(loss(theta; z) / tau)

which upper-bounds the worst case by at most ``tau * log(#scenarios)``.
Scenario losses, gradients and Hessians come from rank-k Woodbury
corrections of the unfailed factorization, so a full soft-max evaluation
costs little more than one plain loss evaluation. Generator failures are
obtained by restricting the failable set to the virtual edges of an
augmented network.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._threads import single_threaded_blas
from .convex import (
    BarrierSettings,
    ConvexSolveResult,
    default_start,
    minimize_penalized,
    solve_fixed_zeta,
)
from .errors import (
    DisconnectedNetworkError,
    InfeasibleRobustnessError,
    NumericalSingularityError,
)
from .network import CostModel, CurrentMoment, NetworkTopology
from .oracles import edge_connectivity
from .resistive import ExpectedLoss, loss_on_support
from .sparse import AnnealSchedule, SparseDesignResult, anneal_structure, prune

# Loss assigned to scenarios that disconnect loaded nodes.
LARGE_LOSS = 1e12

# Scenario weights below this fraction of the dominant weight are dropped
# from gradient/Hessian accumulation (they are zero to machine precision).
WEIGHT_FLOOR = 1e-16

# Temperature continuation for the convex warm-up: start where the soft-max
# is mild relative to the initial worst case, shrink by decades to the target.
TAU_WARMUP_FRACTION = 0.05
TAU_WARMUP_DECAY = 0.1

FAILABLE_CHOICES = ("real", "virtual", "all")


@dataclass(frozen=True)
class FailureScenario:
    """Indicator vector of failed edges, exactly k ones."""

    z: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.z)
        if not np.isin(z, (0, 1)).all():
            raise ValueError("z must be binary")
        object.__setattr__(self, "z", z.astype(float))

    @property
    def k(self) -> int:
        return int(self.z.sum())


@dataclass(frozen=True)
class RobustSettings:
    k: int = 1
    tau: float = 0.01
    failable: str = "real"

    def __post_init__(self) -> None:
        if not 0 <= self.k <= 2:
            raise ValueError("k must be 0, 1 or 2 (scenario enumeration is C(m, k))")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.failable not in FAILABLE_CHOICES:
            raise ValueError(f"failable must be one of {FAILABLE_CHOICES}")


def failable_mask(topology: NetworkTopology, failable: str) -> np.ndarray:
    if failable == "all":
        return np.ones(topology.n_edges, dtype=bool)
    real = topology.real_edge_mask
    if failable == "real":
        return real.copy()
    mask = ~real
    if not mask.any():
        raise ValueError("topology has no virtual edges; augment it first")
    return mask


def scenario_loss(
    topology: NetworkTopology, theta: np.ndarray, moment, z: np.ndarray
) -> float:
    """Expected loss with the failed edges' conductances zeroed.

    Returns ``LARGE_LOSS`` when the failure disconnects loaded nodes instead
    of raising, so scenario sweeps always produce finite numbers.
    """
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != theta.shape:
        raise ValueError("z must have one entry per edge")
    survived = (1.0 - z) * theta
    try:
        return loss_on_support(topology, survived, moment, survived > 0)
    except DisconnectedNetworkError:
        return LARGE_LOSS


def _scenario_index_sets(m: int, k: int, failable: np.ndarray | None):
    idx = np.arange(m) if failable is None else np.flatnonzero(failable)
    if k > idx.size:
        raise ValueError(f"k={k} exceeds the {idx.size} failable edges")
    return [tuple(int(i) for i in combo) for combo in itertools.combinations(idx, k)]


def worst_case_loss(
    topology: NetworkTopology,
    theta: np.ndarray,
    moment,
    k: int,
    failable: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Maximum scenario loss over all exactly-k failure sets.

    Ties keep the first maximizer in failed-index order, i.e. the scenario
    with the lexicographically smallest failed edge set.
    """
    theta = np.asarray(theta, dtype=float)
    best = -np.inf
    best_z = np.zeros(topology.n_edges)
    with single_threaded_blas():
        for combo in _scenario_index_sets(topology.n_edges, k, failable):
            z = np.zeros(topology.n_edges)
            z[list(combo)] = 1.0
            value = scenario_loss(topology, theta, moment, z)
            if value > best:
                best, best_z = value, z
    return float(best), best_z


class SoftmaxScenarioLoss:
    """Smooth convex stand-in for the worst-case loss over k-failure scenarios.

    Provides the same ``value`` / ``value_grad_hess`` interface as the plain
    expected loss, so the barrier and reweighting machinery runs unchanged.
    With ``k=0`` it reduces exactly (bit for bit) to the expected loss.
    """

    def __init__(
        self,
        topology: NetworkTopology,
        moment,
        k: int,
        tau: float,
        failable: np.ndarray | None = None,
    ):
        if not tau > 0:
            raise ValueError("tau must be > 0")
        self.topology = topology
        self.base = ExpectedLoss(topology, moment)
        self.k = int(k)
        self.tau = float(tau)
        self.scenarios = _scenario_index_sets(topology.n_edges, self.k, failable)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    @property
    def smoothing_gap(self) -> float:
        """Upper bound ``tau * log(#scenarios)`` on the soft-max overshoot."""
        return self.tau * math.log(self.n_scenarios)

    def _woodbury(self, theta, s_gram, g_gram, combo):
        """Capacitance inverse W and loss shift for one failed edge set.

        Returns ``(W, shift)`` with ``loss_z = loss + shift``, or ``None``
        when the failure disconnects the network (capacitance not PD).
        """
        f = list(combo)
        d_inv = np.diag(1.0 / theta[f])
        cap = d_inv - s_gram[np.ix_(f, f)]
        eigs = np.linalg.eigvalsh(cap)
        if eigs[0] <= 1e-12 * max(np.abs(eigs).max(), 1e-300):
            return None
        w = np.linalg.inv(cap)
        w = 0.5 * (w + w.T)
        shift = float(np.sum(w * g_gram[np.ix_(f, f)]))
        return w, shift

    def scenario_values(self, theta: np.ndarray) -> np.ndarray:
        """All scenario losses at theta (LARGE_LOSS for disconnecting ones)."""
        theta = np.asarray(theta, dtype=float)
        if self.k == 0:
            return np.array([self.base.value(theta)])
        if self.k == 1:
            base, s_diag, g_diag = self.base.value_and_diags(theta)
            values = []
            for (f,) in self.scenarios:
                denom = 1.0 - theta[f] * s_diag[f]
                if denom <= 1e-12:
                    values.append(LARGE_LOSS)
                else:
                    values.append(min(base + theta[f] * g_diag[f] / denom, LARGE_LOSS))
            return np.array(values)
        kern = self.base.kernel(theta)
        values = []
        for combo in self.scenarios:
            corr = self._woodbury(theta, kern.s_gram, kern.g_gram, combo)
            if corr is None:
                values.append(LARGE_LOSS)
            else:
                values.append(min(kern.value + corr[1], LARGE_LOSS))
        return np.array(values)

    def _log_sum_exp(self, values: np.ndarray) -> float:
        shift = float(values.max())
        return shift + self.tau * float(
            np.log(np.sum(np.exp((values - shift) / self.tau)))
        )

    def value(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if self.k == 0:
            return self.base.value(theta)
        return self._log_sum_exp(self.scenario_values(theta))

    def weights(self, theta: np.ndarray) -> np.ndarray:
        """Soft-max scenario weights (a probability vector)."""
        values = self.scenario_values(np.asarray(theta, dtype=float))
        w = np.exp((values - values.max()) / self.tau)
        return w / w.sum()

    def value_grad_hess(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        kern = self.base.kernel(theta)
        if self.k == 0:
            return kern.value, kern.grad, kern.hess
        if self.k == 1:
            return self._value_grad_hess_single(theta, kern)
        return self._value_grad_hess_generic(theta, kern)

    def _softmax_weights(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        shift = float(values.max())
        if shift >= LARGE_LOSS:
            raise NumericalSingularityError(
                "a failure scenario disconnects the current design"
            )
        raw = np.exp((values - shift) / self.tau)
        return shift + self.tau * float(np.log(raw.sum())), raw / raw.sum()

    def _value_grad_hess_single(self, theta: np.ndarray, kern):
        """All single-failure scenarios at once via rank-one downdates.

        For a failed edge f the corrected Gram matrices are rank-one updates
        along the columns S[:, f], G[:, f]; summing the weighted scenario
        Hessians therefore reduces to a handful of m x m x |F| products over
        the stacked (scaled) columns instead of a Python loop.
        """
        s_gram, g_gram = kern.s_gram, kern.g_gram
        fail = np.array([f for (f,) in self.scenarios], dtype=int)
        s_ff = np.diag(s_gram)[fail]
        g_ff = np.diag(g_gram)[fail]
        denom = 1.0 - theta[fail] * s_ff
        valid = denom > 1e-12
        rho = np.where(valid, theta[fail] / np.where(valid, denom, 1.0), 0.0)
        values = np.where(valid, np.minimum(kern.value + rho * g_ff, LARGE_LOSS), LARGE_LOSS)
        value, weights = self._softmax_weights(values)

        keep = weights >= WEIGHT_FLOOR
        fl, w = fail[keep], weights[keep]
        rho, s_ff, g_ff = rho[keep], s_ff[keep], g_ff[keep]
        s_cols = s_gram[:, fl]
        g_cols = g_gram[:, fl]
        q_cols = s_cols * g_cols
        s2_cols = s_cols * s_cols
        diag_g = np.diag(g_gram)

        # scenario gradients: -diag(G_z), failed entry zeroed
        gz_diag = (
            diag_g[None, :]
            + (2.0 * rho)[:, None] * q_cols.T
            + (rho**2 * g_ff)[:, None] * s2_cols.T
        )
        gz_diag[np.arange(fl.size), fl] = 0.0
        grad = -(w @ gz_diag)
        outer_sum = gz_diag.T @ (w[:, None] * gz_diag)

        # weighted sum of scenario Hessians 2 * (S_z o G_z), failed rows zeroed
        a = w * rho
        b = w * rho**2 * g_ff
        c = w * rho**2
        d = w * rho**3 * g_ff
        a1 = s_cols @ (a[:, None] * g_cols.T)
        a2 = s_cols @ (b[:, None] * s_cols.T)
        a3 = s_cols @ (a[:, None] * s_cols.T)
        a4 = s2_cols @ (c[:, None] * q_cols.T)
        a5 = s2_cols @ (d[:, None] * s2_cols.T)
        hess = 2.0 * (
            w.sum() * s_gram * g_gram
            + s_gram * (a1 + a1.T + a2)
            + g_gram * a3
            + a4
            + a4.T
            + a5
        )
        # zero out each scenario's failed row/column of its own Hessian
        scale = 1.0 + rho * s_ff
        col_s = s_cols * scale[None, :]
        col_g = g_cols * scale[None, :] + s_cols * (rho * g_ff * scale)[None, :]
        h_cols = 2.0 * col_s * col_g
        corr = np.zeros_like(hess)
        corr[fl, :] = w[:, None] * h_cols.T
        corr = corr + corr.T
        corr[fl, fl] -= w * h_cols[fl, np.arange(fl.size)]
        hess -= corr

        hess += (outer_sum - np.outer(grad, grad)) / self.tau
        return value, grad, hess

    def _value_grad_hess_generic(self, theta: np.ndarray, kern):
        s_gram, g_gram = kern.s_gram, kern.g_gram
        corrections = []
        values = np.empty(len(self.scenarios))
        for i, combo in enumerate(self.scenarios):
            corr = self._woodbury(theta, s_gram, g_gram, combo)
            corrections.append(corr)
            values[i] = LARGE_LOSS if corr is None else min(kern.value + corr[1], LARGE_LOSS)
        value, weights = self._softmax_weights(values)

        m = theta.size
        grad = np.zeros(m)
        hess = np.zeros((m, m))
        outer_sum = np.zeros((m, m))
        for i, combo in enumerate(self.scenarios):
            w_i = weights[i]
            if w_i < WEIGHT_FLOOR:
                continue
            f = list(combo)
            w_cap, _ = corrections[i]
            s_col = s_gram[:, f]
            g_col = g_gram[:, f]
            sw = s_col @ w_cap
            g_z = g_gram + sw @ g_col.T + g_col @ sw.T + sw @ g_gram[np.ix_(f, f)] @ sw.T
            s_z = s_gram + sw @ s_col.T
            grad_z = -np.diag(g_z).copy()
            grad_z[f] = 0.0
            hess_z = 2.0 * s_z * g_z
            hess_z[f, :] = 0.0
            hess_z[:, f] = 0.0
            grad += w_i * grad_z
            hess += w_i * hess_z
            outer_sum += w_i * np.outer(grad_z, grad_z)
        hess += (outer_sum - np.outer(grad, grad)) / self.tau
        return value, grad, hess


def softmax_loss(
    topology: NetworkTopology,
    theta: np.ndarray,
    moment,
    k: int,
    tau: float,
    failable: np.ndarray | None = None,
) -> float:
    """Gibbs soft-max of the k-failure scenario losses at temperature tau."""
    return SoftmaxScenarioLoss(topology, moment, k, tau, failable).value(theta)


def softmax_loss_gradient(
    topology: NetworkTopology,
    theta: np.ndarray,
    moment,
    k: int,
    tau: float,
    failable: np.ndarray | None = None,
) -> np.ndarray:
    _, grad, _ = SoftmaxScenarioLoss(topology, moment, k, tau, failable).value_grad_hess(
        theta
    )
    return grad


def _tau_ladder(start_scale: float, tau: float) -> list[float]:
    taus = []
    t = max(tau, TAU_WARMUP_FRACTION * abs(start_scale))
    while t > tau * (1.0 + 1e-9):
        taus.append(t)
        t *= TAU_WARMUP_DECAY
    taus.append(tau)
    return taus


def _softmax_warmup(
    topology: NetworkTopology,
    moment,
    robust: "RobustSettings",
    fmask: np.ndarray,
    alpha: np.ndarray,
    barrier: BarrierSettings,
) -> ConvexSolveResult:
    """Barrier continuation with an extra temperature anneal.

    A cold start at a small tau makes the soft-max nearly the pointwise max
    and Newton crawls; starting at a temperature comparable to the initial
    worst case and shrinking by decades keeps every stage in the smooth
    regime, warm-starting the next.
    """
    probe = SoftmaxScenarioLoss(topology, moment, robust.k, robust.tau, fmask)
    start_scale = float(probe.scenario_values(default_start(alpha)).max())
    taus = _tau_ladder(start_scale, robust.tau)

    model = SoftmaxScenarioLoss(topology, moment, robust.k, taus[0], fmask)
    result = minimize_penalized(model, alpha, barrier)
    theta, iters = result.theta, result.iterations
    converged, restarts = result.converged, result.restarts
    for tau_i in taus[1:]:
        model = SoftmaxScenarioLoss(topology, moment, robust.k, tau_i, fmask)
        theta, it, ok, rs = solve_fixed_zeta(
            model, alpha, barrier.zeta_min, theta, barrier
        )
        iters += it
        converged = converged and ok
        restarts += rs
    loss_value = model.value(theta)
    cost = float(alpha @ theta)
    return ConvexSolveResult(
        theta=theta,
        objective=loss_value + cost,
        loss=float(loss_value),
        cost=cost,
        iterations=iters,
        final_zeta=barrier.zeta_min,
        converged=converged,
        restarts=restarts,
    )


def check_failure_feasibility(
    topology: NetworkTopology,
    k: int,
    failable: np.ndarray,
    active: np.ndarray | None = None,
) -> tuple[bool, int | None]:
    """Is every consumer joined to a generator by k+1 failure-disjoint paths?

    Failable edges count once toward the requirement; edges that cannot fail
    are free to be shared. Returns (ok, first violating consumer).
    """
    if active is None:
        active = np.ones(topology.n_edges, dtype=bool)
    edges = [(e.u, e.v) for e in topology.edges if active[e.id]]
    caps = [1 if failable[e.id] else k + 1 for e in topology.edges if active[e.id]]
    generators = topology.generators
    target = topology.virtual_generator
    if target is None:
        targets = generators
    else:
        targets = [target]
    if not targets:
        return False, None
    for c in topology.consumers:
        flow = edge_connectivity(
            topology.n_nodes, edges, caps, c, targets, limit=k + 1
        )
        if flow < k + 1:
            return False, c
    return True, None


def design_robust(
    topology: NetworkTopology,
    moment: CurrentMoment | np.ndarray,
    costs: CostModel,
    robust: RobustSettings | None = None,
    schedule: AnnealSchedule | None = None,
    barrier: BarrierSettings | None = None,
) -> SparseDesignResult:
    """Sparse design with the loss replaced by its k-failure soft-max.

    Every record of the returned trace carries the exact worst-case loss at
    that iterate, so the soft-max sandwich can be audited after the fact.
    The final certificate (worst case over the pruned design, the maximizing
    scenario, feasibility) lands in ``result.diagnostics``.
    """
    robust = robust or RobustSettings()
    schedule = schedule or AnnealSchedule()
    barrier = barrier or BarrierSettings()
    costs.validate_against(topology)
    fmask = failable_mask(topology, robust.failable)

    ok, bad_consumer = check_failure_feasibility(topology, robust.k, fmask)
    if not ok:
        raise InfeasibleRobustnessError(
            f"consumer {bad_consumer} lacks {robust.k + 1} failure-disjoint paths "
            "to a generator in the candidate topology"
        )

    loss_model = SoftmaxScenarioLoss(topology, moment, robust.k, robust.tau, fmask)

    def observer(theta, record):
        record.worst_case = float(loss_model.scenario_values(theta).max())

    convex_solver = None
    if robust.k > 0:
        def convex_solver(model, alpha, barrier_settings):
            return _softmax_warmup(
                topology, moment, robust, fmask, alpha, barrier_settings
            )

    theta, records, gammas, convex_result, converged = anneal_structure(
        loss_model,
        costs,
        schedule,
        barrier,
        observer,
        convex_solver,
        real_mask=topology.real_edge_mask,
    )

    active = prune(theta, topology.real_edge_mask)
    theta_pruned = np.where(active, theta, 0.0)
    wc_value, wc_z = worst_case_loss(topology, theta_pruned, moment, robust.k, fmask)
    feasible = wc_value < LARGE_LOSS
    linear_cost = float(costs.alpha @ theta_pruned)
    step_cost = float(costs.beta @ (theta_pruned > 0))
    return SparseDesignResult(
        theta=theta,
        active=active,
        theta_pruned=theta_pruned,
        true_objective=wc_value + linear_cost + step_cost,
        true_loss=wc_value,
        linear_cost=linear_cost,
        step_cost=step_cost,
        records=records,
        gamma_trace=gammas,
        convex_result=convex_result,
        converged=converged,
        feasible=feasible,
        diagnostics={
            "k": robust.k,
            "tau": robust.tau,
            "n_scenarios": loss_model.n_scenarios,
            "smoothing_gap": loss_model.smoothing_gap,
            "worst_case": wc_value,
            "worst_scenario": [int(i) for i in np.flatnonzero(wc_z)],
        },
    )
