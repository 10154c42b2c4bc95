"""Structure selection by annealed smoothing and reweighted convex solves.

The fixed charge ``beta^T step(theta)`` makes network design combinatorial.
It is smoothed by ``phi_gamma(t) = t / (t + gamma)``, annealed from a large
gamma (where the problem is the convex one) down to a small gamma (where
phi_gamma is nearly the step). Each gamma stage is attacked by
majorization-minimization: the concave penalty is linearized at the current
iterate, which simply reweights the linear cost, and the resulting convex
problem is solved with the barrier Newton engine at a fixed barrier weight.
Each accepted MM iterate provably does not increase the barrier-inclusive
smoothed objective, which is what the descent diagnostics record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._threads import single_threaded_blas
from .convex import (
    BarrierSettings,
    ConvexSolveResult,
    minimize_penalized,
    solve_fixed_zeta,
)
from .errors import DisconnectedNetworkError
from .network import CostModel, CurrentMoment, NetworkTopology
from .resistive import ExpectedLoss, loss_on_support

# Edges below this fraction of the largest conductance are reported unused.
PRUNE_RELATIVE = 1e-5


@dataclass(frozen=True)
class AnnealSchedule:
    """Continuation schedule for the step-function smoothing parameter.

    ``gamma_init``/``gamma_min`` default to data-driven values: the largest
    conductance of the convex solution, and ``gamma_min_factor`` times that.
    """

    gamma_init: float | None = None
    gamma_decay: float = 0.7
    gamma_min: float | None = None
    gamma_min_factor: float = 1e-4
    perturbation: float = 1e-3
    seed: int = 0
    mm_tol: float = 1e-7
    max_mm_iters: int = 40
    max_perturbations: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.gamma_decay < 1:
            raise ValueError("gamma_decay must be in (0, 1)")
        if self.gamma_init is not None and not self.gamma_init > 0:
            raise ValueError("gamma_init must be > 0")
        if self.gamma_min is not None and not self.gamma_min > 0:
            raise ValueError("gamma_min must be > 0")
        if (
            self.gamma_init is not None
            and self.gamma_min is not None
            and self.gamma_min > self.gamma_init
        ):
            raise ValueError("gamma_min must not exceed gamma_init")
        if self.perturbation < 0:
            raise ValueError("perturbation must be >= 0")
        if not self.mm_tol > 0:
            raise ValueError("mm_tol must be > 0")
        if self.max_mm_iters < 1:
            raise ValueError("max_mm_iters must be >= 1")


@dataclass
class MMRecord:
    """One accepted iterate of the reweighting loop.

    ``objective`` is the barrier-inclusive smoothed objective (the quantity
    with the descent guarantee); ``smoothed_objective`` drops the barrier
    term. Records flagged with an event (a barrier restart inside the inner
    solve, or an explicit random perturbation) are excluded from descent
    checks.
    """

    gamma: float
    iteration: int
    objective: float
    smoothed_objective: float
    loss: float
    newton_iterations: int = 0
    event: str | None = None
    worst_case: float | None = None


@dataclass
class SparseDesignResult:
    theta: np.ndarray
    active: np.ndarray
    theta_pruned: np.ndarray
    true_objective: float
    true_loss: float
    linear_cost: float
    step_cost: float
    records: list[MMRecord]
    gamma_trace: list[float]
    convex_result: ConvexSolveResult
    converged: bool
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


def smoothed_step(t, gamma: float):
    """Concave step surrogate ``t / (t + gamma)`` on ``t >= 0``."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("smoothed_step is defined for t >= 0")
    out = t / (t + gamma)
    return float(out) if out.ndim == 0 else out


def mm_reweight(
    alpha: np.ndarray, beta: np.ndarray, gamma: float, theta_prev: np.ndarray
) -> np.ndarray:
    """Linearized fixed-charge cost: ``alpha + beta * gamma / (gamma + theta)^2``."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    theta_prev = np.asarray(theta_prev, dtype=float)
    if np.any(theta_prev < 0):
        raise ValueError("theta_prev must be >= 0")
    return alpha + beta * gamma / (gamma + theta_prev) ** 2


def _smoothed_values(loss_model, alpha, beta, gamma, zeta, theta):
    """(barrier-inclusive objective, smoothed objective, loss) at theta."""
    loss_value = loss_model.value(theta)
    smoothed = float(loss_value + alpha @ theta + beta @ smoothed_step(theta, gamma))
    return smoothed - zeta * float(np.log(theta).sum()), smoothed, float(loss_value)


def _is_saddle(loss_model, beta, gamma, zeta, theta) -> bool:
    """Indefiniteness test of the smoothed objective at an MM fixed point."""
    _, _, hess = loss_model.value_grad_hess(theta)
    curvature = zeta / theta**2 - 2.0 * beta * gamma / (theta + gamma) ** 3
    full = hess + np.diag(curvature)
    min_eig = float(np.linalg.eigvalsh(full)[0])
    return min_eig < -1e-8 * (1.0 + abs(np.trace(full)) / theta.size)


def _mm_stage(
    loss_model,
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: float,
    theta: np.ndarray,
    barrier: BarrierSettings,
    schedule: AnnealSchedule,
    rng: np.random.Generator,
    observer=None,
) -> tuple[np.ndarray, list[MMRecord], bool]:
    zeta = barrier.zeta_min
    records: list[MMRecord] = []
    f_prev, _, _ = _smoothed_values(loss_model, alpha, beta, gamma, zeta, theta)
    perturbations = 0
    converged = False

    it = 0
    while it < schedule.max_mm_iters:
        alpha_rw = mm_reweight(alpha, beta, gamma, theta)
        theta_new, iters, ok, restarts = solve_fixed_zeta(
            loss_model, alpha_rw, zeta, theta, barrier
        )
        f_new, smoothed, loss_value = _smoothed_values(
            loss_model, alpha, beta, gamma, zeta, theta_new
        )
        record = MMRecord(
            gamma=gamma,
            iteration=it,
            objective=f_new,
            smoothed_objective=smoothed,
            loss=loss_value,
            newton_iterations=iters,
            event="zeta_restart" if restarts else None,
        )
        if observer is not None:
            observer(theta_new, record)
        records.append(record)
        it += 1

        move = float(np.linalg.norm(theta_new - theta)) / max(
            float(np.linalg.norm(theta)), 1e-300
        )
        rel_change = abs(f_new - f_prev) / max(1.0, abs(f_prev))
        theta, f_prev = theta_new, f_new
        if not ok:
            break
        if rel_change <= schedule.mm_tol or move <= 1e-12:
            if (
                perturbations < schedule.max_perturbations
                and schedule.perturbation > 0
                and _is_saddle(loss_model, beta, gamma, zeta, theta)
            ):
                theta = theta * (
                    1.0
                    + rng.uniform(
                        -schedule.perturbation, schedule.perturbation, theta.size
                    )
                )
                perturbations += 1
                f_prev, smoothed, loss_value = _smoothed_values(
                    loss_model, alpha, beta, gamma, zeta, theta
                )
                record = MMRecord(
                    gamma=gamma,
                    iteration=it,
                    objective=f_prev,
                    smoothed_objective=smoothed,
                    loss=loss_value,
                    event="perturbation",
                )
                if observer is not None:
                    observer(theta, record)
                records.append(record)
                it += 1
                continue
            converged = True
            break
    return theta, records, converged


def mm_stage(
    topology: NetworkTopology,
    moment: CurrentMoment | np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: float,
    theta_start: np.ndarray,
    barrier: BarrierSettings | None = None,
    schedule: AnnealSchedule | None = None,
) -> tuple[np.ndarray, list[MMRecord]]:
    """One fixed-gamma reweighting stage from a strictly positive start."""
    barrier = barrier or BarrierSettings()
    schedule = schedule or AnnealSchedule()
    rng = np.random.default_rng(schedule.seed)
    theta, records, _ = _mm_stage(
        ExpectedLoss(topology, moment),
        np.asarray(alpha, float),
        np.asarray(beta, float),
        gamma,
        np.asarray(theta_start, float),
        barrier,
        schedule,
        rng,
    )
    return theta, records


def gamma_sequence(gamma_init: float, decay: float, gamma_min: float) -> list[float]:
    gammas = []
    g = gamma_init
    while g >= gamma_min * (1.0 - 1e-12):
        gammas.append(g)
        g *= decay
    return gammas


def anneal_structure(
    loss_model,
    costs: CostModel,
    schedule: AnnealSchedule,
    barrier: BarrierSettings,
    observer=None,
    convex_solver=None,
    real_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, list[MMRecord], list[float], ConvexSolveResult, bool]:
    """Convex warm-up followed by the full gamma continuation.

    Returns the final iterate, the MM trace, the gamma sequence, the convex
    warm-up result, and a convergence flag. Shared by the plain and the
    failure-robust designers; only the loss model differs. ``convex_solver``
    replaces the plain barrier continuation for loss models that need their
    own warm-up (the soft-max anneals its temperature there). The data-driven
    gamma scale considers only the edges in ``real_mask``: virtual-line
    conductances are orders of magnitude larger by construction and carry no
    fixed charge, so they must not stretch the continuation.
    """
    alpha, beta = costs.alpha, costs.beta
    solver = convex_solver or minimize_penalized
    convex_result = solver(loss_model, alpha, barrier)
    theta = convex_result.theta

    gamma_init = schedule.gamma_init
    if gamma_init is None:
        scoped = theta if real_mask is None else theta[real_mask]
        gamma_init = float(scoped.max()) if scoped.size else 1.0
        if gamma_init <= 0:
            gamma_init = 1.0
    gamma_min = schedule.gamma_min
    if gamma_min is None:
        gamma_min = schedule.gamma_min_factor * gamma_init
    gammas = gamma_sequence(gamma_init, schedule.gamma_decay, gamma_min)

    rng = np.random.default_rng(schedule.seed)
    records: list[MMRecord] = []
    converged = convex_result.converged
    with single_threaded_blas():
        for gamma in gammas:
            theta, stage_records, stage_ok = _mm_stage(
                loss_model, alpha, beta, gamma, theta, barrier, schedule, rng, observer
            )
            records.extend(stage_records)
            converged = converged and stage_ok
    return theta, records, gammas, convex_result, converged


def prune(
    theta: np.ndarray,
    real_mask: np.ndarray | None = None,
    relative: float = PRUNE_RELATIVE,
) -> np.ndarray:
    """Active-edge mask: conductances above ``relative`` times the maximum.

    Only real edges are subject to selection; the threshold is taken over
    them and virtual edges (deliberately huge, never "built") stay active.
    """
    if real_mask is None:
        real_mask = np.ones(theta.size, dtype=bool)
    real_theta = theta[real_mask]
    peak = float(real_theta.max()) if real_theta.size else 0.0
    active = ~real_mask
    if peak > 0:
        active = active | (theta >= relative * peak)
    return active


def design_sparse(
    topology: NetworkTopology,
    moment: CurrentMoment | np.ndarray,
    costs: CostModel,
    schedule: AnnealSchedule | None = None,
    barrier: BarrierSettings | None = None,
) -> SparseDesignResult:
    """Select a sparse subnetwork minimizing loss plus linear and fixed costs.

    The reported ``true_objective`` charges the exact step function on the
    pruned support, so it is directly comparable to subgraph-enumeration
    optima.
    """
    schedule = schedule or AnnealSchedule()
    barrier = barrier or BarrierSettings()
    costs.validate_against(topology)
    loss_model = ExpectedLoss(topology, moment)
    theta, records, gammas, convex_result, converged = anneal_structure(
        loss_model, costs, schedule, barrier, real_mask=topology.real_edge_mask
    )

    active = prune(theta, topology.real_edge_mask)
    theta_pruned = np.where(active, theta, 0.0)
    feasible = True
    try:
        true_loss = loss_on_support(topology, theta_pruned, moment, active)
    except DisconnectedNetworkError:
        true_loss = np.inf
        feasible = False
    linear_cost = float(costs.alpha @ theta_pruned)
    step_cost = float(costs.beta @ (theta_pruned > 0))
    return SparseDesignResult(
        theta=theta,
        active=active,
        theta_pruned=theta_pruned,
        true_objective=true_loss + linear_cost + step_cost,
        true_loss=true_loss,
        linear_cost=linear_cost,
        step_cost=step_cost,
        records=records,
        gamma_trace=gammas,
        convex_result=convex_result,
        converged=converged,
        feasible=feasible,
    )


def descent_violations(
    records: list[MMRecord], tol: float = 1e-9
) -> list[tuple[MMRecord, MMRecord]]:
    """Pairs of consecutive same-gamma records whose objective increased.

    Records produced by perturbations or barrier restarts reset the
    comparison; a clean trace returns an empty list.
    """
    violations = []
    prev: MMRecord | None = None
    for rec in records:
        if prev is not None and prev.gamma == rec.gamma and rec.event is None:
            scale = max(1.0, abs(prev.objective))
            if rec.objective > prev.objective + tol * scale:
                violations.append((prev, rec))
        prev = rec
    return violations
