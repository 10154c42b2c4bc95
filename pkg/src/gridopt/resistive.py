"""Resistive network core: Laplacian assembly, potential solves, loss calculus.

Everything here is dense linear algebra on desk-scale networks (up to a few
hundred nodes). The regularized inverse ``(K + 11^T)^-1`` replaces the
Laplacian pseudo-inverse throughout; on balanced injections the two agree,
and the regularization picks the zero-mean potential solution.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dpocon

from .errors import DisconnectedNetworkError
from .network import CurrentMoment, NetworkTopology

# Estimated condition number above which the regularized system is treated
# as numerically disconnected.
COND_LIMIT = 1e12


def conductance_matrix(topology: NetworkTopology, theta: np.ndarray) -> np.ndarray:
    """Edge-weighted graph Laplacian ``K = A Diag(theta) A^T``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (topology.n_edges,):
        raise ValueError(
            f"theta has {theta.size} entries for {topology.n_edges} edges"
        )
    a = topology.incidence_matrix
    return (a * theta) @ a.T


class _Factor:
    """Cholesky factorization of ``M = K + 11^T`` with a condition guard."""

    def __init__(self, m_matrix: np.ndarray):
        anorm = np.abs(m_matrix).sum(axis=0).max()
        try:
            self._cho = scipy.linalg.cho_factor(m_matrix, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise DisconnectedNetworkError(
                "conductance system is singular (disconnected support)"
            ) from exc
        rcond, info = dpocon(self._cho[0], anorm, uplo=b"L")
        if info != 0 or not rcond > 1.0 / COND_LIMIT:
            raise DisconnectedNetworkError(
                f"conductance system is numerically singular (rcond={rcond:.2e})"
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho, rhs)


def _regularized_factor(k_matrix: np.ndarray) -> _Factor:
    return _Factor(k_matrix + 1.0)  # adds the rank-one 11^T regularizer


def _moment_matrix(moment) -> np.ndarray:
    if isinstance(moment, CurrentMoment):
        return moment.matrix
    return np.asarray(moment, dtype=float)


def solve_potentials(k_matrix: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-mean node potentials ``u`` with ``K u = b``.

    ``b`` must be balanced (zero total injection); the returned ``u``
    additionally satisfies ``sum(u) = 0``.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if abs(b.sum()) > 1e-9 * max(bnorm, 1e-300):
        raise ValueError("injections must sum to zero")
    return _regularized_factor(np.asarray(k_matrix, dtype=float)).solve(b)


def expected_loss(topology: NetworkTopology, theta: np.ndarray, moment) -> float:
    """Expected resistive dissipation ``Tr((K + 11^T)^-1 B)``."""
    b = _moment_matrix(moment)
    factor = _regularized_factor(conductance_matrix(topology, theta))
    return float(np.trace(factor.solve(b)))


def loss_gradient(topology: NetworkTopology, theta: np.ndarray, moment) -> np.ndarray:
    """Per-edge derivative ``-diag(A^T M^-1 B M^-1 A)`` of the expected loss.

    Every entry is <= 0: extra conductance never increases dissipation.
    """
    return ExpectedLoss(topology, moment).kernel(theta).grad


def loss_hessian(topology: NetworkTopology, theta: np.ndarray, moment) -> np.ndarray:
    """Hessian ``2 (A^T M^-1 A) o (A^T M^-1 B M^-1 A)`` (Hadamard product, PSD)."""
    return ExpectedLoss(topology, moment).kernel(theta).hess


def ac_dc_loss(
    topology: NetworkTopology, theta: np.ndarray, p: np.ndarray, mu: float
) -> float:
    """Leading-order line losses of the DC power-flow model.

    With susceptances ``theta / mu`` the lossless flow solves
    ``(K/mu) phi = p``; the first-order dissipation is
    ``phi^T K phi / 2 = (mu^2 / 2) p^T K^+ p``.
    """
    if not mu > 0:
        raise ValueError("mu must be > 0")
    p = np.asarray(p, dtype=float)
    if abs(p.sum()) > 1e-9 * max(np.linalg.norm(p), 1e-300):
        raise ValueError("real powers must sum to zero")
    k = conductance_matrix(topology, theta)
    phi = _regularized_factor(k / mu).solve(p)
    return float(0.5 * phi @ k @ phi)


class LossKernel:
    """Expected loss with the two incidence Gram matrices behind its calculus.

    ``S = A^T M^-1 A`` and ``G = A^T M^-1 B M^-1 A`` determine the gradient,
    the Hessian, and (via Woodbury corrections) every edge-failure variant,
    so solvers compute them once per iterate.
    """

    __slots__ = ("value", "s_gram", "g_gram")

    def __init__(self, value: float, s_gram: np.ndarray, g_gram: np.ndarray):
        self.value = value
        self.s_gram = s_gram
        self.g_gram = g_gram

    @property
    def grad(self) -> np.ndarray:
        return -np.diag(self.g_gram).copy()

    @property
    def hess(self) -> np.ndarray:
        return 2.0 * self.s_gram * self.g_gram


class ExpectedLoss:
    """Expected dissipation as a smooth convex function of conductances."""

    def __init__(self, topology: NetworkTopology, moment):
        self.topology = topology
        self.moment = _moment_matrix(moment)
        if self.moment.shape != (topology.n_nodes, topology.n_nodes):
            raise ValueError("moment matrix does not match topology size")

    def factor(self, theta: np.ndarray) -> _Factor:
        return _regularized_factor(conductance_matrix(self.topology, theta))

    def value(self, theta: np.ndarray) -> float:
        return float(np.trace(self.factor(theta).solve(self.moment)))

    def value_and_diags(
        self, theta: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Loss together with ``diag(S)`` and ``diag(G)`` (single-failure data)."""
        a = self.topology.incidence_matrix
        factor = self.factor(theta)
        p = factor.solve(a)
        value = float(np.trace(factor.solve(self.moment)))
        s_diag = np.einsum("ij,ij->j", a, p)
        g_diag = np.einsum("ij,ij->j", p, self.moment @ p)
        return value, s_diag, g_diag

    def kernel(self, theta: np.ndarray) -> LossKernel:
        a = self.topology.incidence_matrix
        factor = self.factor(theta)
        p = factor.solve(a)
        bp = self.moment @ p
        value = float(np.trace(factor.solve(self.moment)))
        s_gram = a.T @ p
        g_gram = p.T @ bp
        s_gram = 0.5 * (s_gram + s_gram.T)
        g_gram = 0.5 * (g_gram + g_gram.T)
        return LossKernel(value, s_gram, g_gram)

    def value_grad_hess(
        self, theta: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray]:
        kern = self.kernel(theta)
        return kern.value, kern.grad, kern.hess


def loss_on_support(
    topology: NetworkTopology,
    theta: np.ndarray,
    moment,
    active: np.ndarray | None = None,
) -> float:
    """Expected loss of the subnetwork induced by the active edges.

    Nodes incident to no active edge and carrying no load are dropped before
    factoring, so a pruned design with stranded transmission nodes still
    evaluates cleanly. Raises DisconnectedNetworkError when the loaded nodes
    are not connected by the active edges.
    """
    theta = np.asarray(theta, dtype=float)
    b = _moment_matrix(moment)
    if active is None:
        active = theta > 0
    active = np.asarray(active, dtype=bool)

    keep = np.abs(np.diag(b)) > 0
    for e in topology.edges:
        if active[e.id]:
            keep[e.u] = keep[e.v] = True
    if not keep.any():
        return 0.0
    idx = np.flatnonzero(keep)
    a_red = topology.incidence_matrix[np.ix_(idx, np.flatnonzero(active))]
    theta_red = theta[active]
    k_red = (a_red * theta_red) @ a_red.T
    b_red = b[np.ix_(idx, idx)]
    return float(np.trace(_Factor(k_red + 1.0).solve(b_red)))
