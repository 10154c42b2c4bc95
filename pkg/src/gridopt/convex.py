"""Newton barrier solver for penalized conductance design.

Minimizes ``loss(theta) + alpha^T theta`` over ``theta >= 0`` by a classic
log-barrier continuation: for a decreasing sequence of barrier weights zeta,
Newton's method with backtracking line search minimizes

    loss(theta) + alpha^T theta - zeta * sum(log theta)

warm-starting each stage from the previous one. The barrier keeps every
iterate strictly positive; at the final weight the solution is within
``m * zeta_min`` of the constrained optimum.

The loss model is pluggable (expected dissipation, or its soft-max over
failure scenarios) as long as it provides ``value`` and ``value_grad_hess``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._threads import single_threaded_blas
from .errors import DisconnectedNetworkError, NumericalSingularityError
from .network import CurrentMoment, NetworkTopology
from .resistive import ExpectedLoss


@dataclass(frozen=True)
class BarrierSettings:
    zeta_init: float = 1.0
    zeta_decay: float = 0.2
    zeta_min: float = 1e-6
    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    armijo: float = 0.01
    shrink: float = 0.5
    max_restarts: int = 3

    def __post_init__(self) -> None:
        if not (0 < self.zeta_min <= self.zeta_init):
            raise ValueError("require 0 < zeta_min <= zeta_init")
        if not 0 < self.zeta_decay < 1:
            raise ValueError("zeta_decay must be in (0, 1)")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be > 0")
        if not 0 < self.armijo < 0.5:
            raise ValueError("armijo constant must be in (0, 0.5)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must be in (0, 1)")
        if self.max_newton_iters < 1 or self.max_restarts < 0:
            raise ValueError("iteration limits must be positive")


@dataclass
class ConvexSolveResult:
    theta: np.ndarray
    objective: float
    loss: float
    cost: float
    iterations: int
    final_zeta: float
    converged: bool
    restarts: int = 0


def _barrier_value(loss_model, alpha, zeta, theta) -> float:
    try:
        value = loss_model.value(theta)
    except DisconnectedNetworkError:
        return np.inf
    return value + alpha @ theta - zeta * np.log(theta).sum()


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``H d = -g``, adding Levenberg damping if H is numerically indefinite."""
    m = grad.size
    damping = 0.0
    for _ in range(8):
        try:
            cho = scipy.linalg.cho_factor(
                hess if damping == 0.0 else hess + damping * np.eye(m), lower=True
            )
            delta = scipy.linalg.cho_solve(cho, -grad)
            lam2 = float(-grad @ delta)
            if np.isfinite(lam2) and lam2 >= 0.0:
                return delta, lam2
        except scipy.linalg.LinAlgError:
            pass
        damping = max(damping * 100.0, 1e-8 * np.trace(hess) / m)
    raise NumericalSingularityError("Newton system unsolvable even with damping")


def newton_stage(
    loss_model,
    alpha: np.ndarray,
    zeta: float,
    theta0: np.ndarray,
    settings: BarrierSettings,
    kkt_tol: float | None = None,
) -> tuple[np.ndarray, int, bool]:
    """Minimize one barrier subproblem from a strictly positive warm start.

    Accepted steps never increase the barrier objective. Stops when the
    Newton decrement satisfies ``lambda^2 / 2 <= newton_tol``; when
    ``kkt_tol`` is given, additionally polishes until the scaled gradient
    residual ``|grad_l| / (1 + alpha_l)`` is below it (or progress stalls).
    Returns ``(theta, iterations, converged)``.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    if np.any(theta <= 0):
        raise ValueError("warm start must be strictly positive")
    f_cur = _barrier_value(loss_model, alpha, zeta, theta)
    if not np.isfinite(f_cur):
        raise NumericalSingularityError("barrier objective infinite at warm start")

    stalled = False
    for it in range(settings.max_newton_iters):
        try:
            _, g_loss, h_loss = loss_model.value_grad_hess(theta)
        except DisconnectedNetworkError as exc:
            raise NumericalSingularityError(str(exc)) from exc
        grad = g_loss + alpha - zeta / theta
        hess = h_loss + np.diag(zeta / theta**2)
        delta, lam2 = _newton_direction(hess, grad)

        decrement_ok = 0.5 * lam2 <= settings.newton_tol
        if decrement_ok:
            kkt_ok = (
                kkt_tol is None
                or float(np.max(np.abs(grad) / (1.0 + alpha))) <= kkt_tol
            )
            if kkt_ok or stalled:
                return theta, it, True

        # keep strictly inside the positive orthant
        neg = delta < 0
        t_max = 1.0
        if neg.any():
            t_max = min(1.0, 0.995 * float(np.min(-theta[neg] / delta[neg])))
        slope = float(grad @ delta)

        t = t_max
        accepted = False
        for _ in range(60):
            f_new = _barrier_value(loss_model, alpha, zeta, theta + t * delta)
            if f_new <= f_cur + settings.armijo * t * slope:
                accepted = True
                break
            t *= settings.shrink
        if not accepted:
            # no measurable decrease left; fine if the decrement test passed
            return theta, it, decrement_ok
        stalled = (f_cur - f_new) <= 1e-14 * max(1.0, abs(f_cur))
        theta = theta + t * delta
        f_cur = f_new

    return theta, settings.max_newton_iters, False


def _zeta_schedule(z_from: float, z_to: float, decay: float) -> list[float]:
    zetas = [max(z_from, z_to)]
    while zetas[-1] > z_to * (1.0 + 1e-12):
        zetas.append(max(zetas[-1] * decay, z_to))
    return zetas


def _run_stages(
    loss_model,
    alpha: np.ndarray,
    zetas: list[float],
    theta: np.ndarray,
    settings: BarrierSettings,
    kkt_final: bool,
) -> tuple[np.ndarray, int, bool, int]:
    """Anneal over the given barrier weights, restarting on Newton failure.

    A stage failure (non-convergence or a singular Newton system) re-anneals
    from ``1e3 * zeta`` back down, up to ``max_restarts`` times.
    """
    total_iters = 0
    restarts = 0
    zeta_target = zetas[-1]
    i = 0
    while i < len(zetas):
        zeta = zetas[i]
        final = i == len(zetas) - 1
        kkt_tol = settings.newton_tol if (final and kkt_final) else None
        failed = False
        try:
            theta_new, iters, conv = newton_stage(
                loss_model, alpha, zeta, theta, settings, kkt_tol=kkt_tol
            )
            total_iters += iters
            if conv:
                theta = theta_new
                i += 1
                continue
            theta = theta_new
            failed = True
        except NumericalSingularityError:
            failed = True
        if failed:
            if restarts >= settings.max_restarts:
                return theta, total_iters, False, restarts
            restarts += 1
            zetas = _zeta_schedule(1e3 * zeta, zeta_target, settings.zeta_decay)
            i = 0
    return theta, total_iters, True, restarts


def default_start(alpha: np.ndarray) -> np.ndarray:
    """Uniform interior start, scaled so the linear cost of the start is 1."""
    total = float(np.sum(alpha))
    if total <= 0:
        return np.ones_like(alpha)
    return np.ones_like(alpha) / total


def minimize_penalized(
    loss_model,
    alpha: np.ndarray,
    settings: BarrierSettings | None = None,
    theta_init: np.ndarray | None = None,
) -> ConvexSolveResult:
    """Barrier continuation for ``loss + alpha^T theta`` over any loss model."""
    settings = settings or BarrierSettings()
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0):
        raise ValueError("alpha must be >= 0")
    theta = (
        default_start(alpha) if theta_init is None else np.asarray(theta_init, float)
    )
    if np.any(theta <= 0):
        raise ValueError("theta_init must be strictly positive")

    zetas = _zeta_schedule(settings.zeta_init, settings.zeta_min, settings.zeta_decay)
    with single_threaded_blas():
        theta, iters, converged, restarts = _run_stages(
            loss_model, alpha, zetas, theta, settings, kkt_final=True
        )
        loss_value = loss_model.value(theta)
    cost = float(alpha @ theta)
    return ConvexSolveResult(
        theta=theta,
        objective=loss_value + cost,
        loss=float(loss_value),
        cost=cost,
        iterations=iters,
        final_zeta=settings.zeta_min,
        converged=converged,
        restarts=restarts,
    )


def solve_fixed_zeta(
    loss_model,
    alpha: np.ndarray,
    zeta: float,
    theta0: np.ndarray,
    settings: BarrierSettings,
) -> tuple[np.ndarray, int, bool, int]:
    """Single-weight barrier solve with the same restart policy as the anneal.

    Used by the reweighting loops, which keep zeta pinned at its floor and
    only re-anneal when Newton gets stuck.
    """
    with single_threaded_blas():
        return _run_stages(loss_model, alpha, [zeta], theta0, settings, kkt_final=False)


def solve_convex(
    topology: NetworkTopology,
    moment: CurrentMoment | np.ndarray,
    alpha: np.ndarray,
    settings: BarrierSettings | None = None,
    theta_init: np.ndarray | None = None,
) -> ConvexSolveResult:
    """Minimize expected dissipation plus linear build cost over conductances."""
    return minimize_penalized(
        ExpectedLoss(topology, moment), alpha, settings, theta_init
    )
