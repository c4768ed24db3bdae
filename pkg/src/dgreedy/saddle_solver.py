"""Stabilized saddle-point solves at truth and reduced level, the truth
error bound, and the equivalent online Petrov-Galerkin path (CD).

The truth system at a parameter mu is the symmetric block system

    [ R_Y(mu)   B(mu) ] [u]   [f]
    [ B(mu)^T  -w H_b ] [p] = [g]

with w H_b the outflow penalty block (CD) or zero (transport).  Data
defaults to the assembled right-hand side; the greedy passes the
truth-consistent functionals so that the reduced models target the truth
solution manifold, on which u vanishes identically.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigError, UnstableError, UnsupportedError
from .la_core import solve_sym_indefinite, splu_factor
from .parametric_problem import _LruFactorCache

__all__ = [
    "SaddleSolution",
    "OnlineTestBasis",
    "solve_truth",
    "solve_reduced",
    "truth_error_bound",
    "online_pg_solve",
    "reduced_rhs",
]


@dataclass
class SaddleSolution:
    """Auxiliary/error variable u, solution p, and the block residual norm."""

    u: np.ndarray
    p: np.ndarray
    mu: float
    residual_norm: float


def _saddle_matrix(problem, mu):
    R = problem.riesz_matrix(mu)
    B = problem.operator_at(mu)
    if problem.penalty is not None:
        C = -problem.omega * problem.penalty
    else:
        C = sp.csr_matrix((problem.n_trial, problem.n_trial))
    return sp.bmat([[R, B], [B.T, C]], format="csc")


def _saddle_lu(problem, mu):
    cache = getattr(problem, "_saddle_cache", None)
    if cache is None:
        cache = _LruFactorCache(capacity=256)
        problem._saddle_cache = cache
    return cache.get(float(mu), lambda: splu_factor(_saddle_matrix(problem, mu)))


def solve_truth(problem, mu, data=None, boundary_data=None):
    """Solve the truth saddle system at mu.

    ``data`` overrides the assembled load functional (test block);
    ``boundary_data`` overrides the trial-block data (zero by default).
    """
    problem.check_mu(mu)
    f = problem.rhs_at(mu) if data is None else np.asarray(data, dtype=float)
    g = (
        np.zeros(problem.n_trial)
        if boundary_data is None
        else np.asarray(boundary_data, dtype=float)
    )
    K = _saddle_matrix(problem, mu)
    rhs = np.concatenate([f, g])
    x = solve_sym_indefinite(K, rhs, lu=_saddle_lu(problem, mu))
    m = problem.n_test
    u, p = x[:m], x[m:]
    res = np.linalg.norm(K @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return SaddleSolution(u=u, p=p, mu=mu, residual_norm=res)


def reduced_rhs(problem, mu, pair, data=None, boundary_data=None):
    """(F_n, g_n) blocks of the reduced saddle system."""
    f = problem.rhs_at(mu) if data is None else np.asarray(data, dtype=float)
    F_n = pair.V.T @ f
    if boundary_data is not None:
        g_n = pair.Z.T @ np.asarray(boundary_data, dtype=float)
    else:
        g_n = np.zeros(pair.n)
    return F_n, g_n


def solve_reduced(problem, mu, pair, data=None, boundary_data=None):
    """Solve the reduced saddle system; coefficients live in the pair bases."""
    problem.check_mu(mu)
    if pair.n == 0:
        raise UnstableError("empty trial basis")
    R_n = pair.test_gramian(mu)
    B_n = pair.cross_gramian(mu)
    C_n = -problem.omega * pair.h_n() if problem.penalty is not None else np.zeros((pair.n, pair.n))
    K = np.block([[R_n, B_n], [B_n.T, C_n]])
    F_n, g_n = reduced_rhs(problem, mu, pair, data, boundary_data)
    rhs = np.concatenate([F_n, g_n])
    try:
        x = sla.solve(K, rhs, assume_a="sym")
    except np.linalg.LinAlgError:
        raise UnstableError("reduced saddle system singular; stabilization required") from None
    res = np.linalg.norm(K @ x - rhs)
    scale = max(np.linalg.norm(rhs), np.linalg.norm(K, 2) * np.linalg.norm(x), 1e-300)
    if not np.isfinite(res) or res > 1e-8 * scale:
        raise UnstableError(
            f"reduced saddle residual {res:.2e} above tolerance (insufficient stabilization)"
        )
    return SaddleSolution(u=x[: pair.m], p=x[pair.m :], mu=mu, residual_norm=res / scale)


def truth_error_bound(problem, mu, solution):
    """(1 - delta_N^2)^{-1/2} ||u_N(mu)||_Y: certified truth-error bound."""
    if not (0.0 <= problem.delta_N < 1.0):
        raise ConfigError("delta_N", "must lie in [0, 1)")
    return problem.y_norm(mu, solution.u) / np.sqrt(1.0 - problem.delta_N ** 2)


class OnlineTestBasis:
    """Per-component test basis functions psi_{k,j} solved within Y_n (CD).

    psi_{k,j} is the Y_n-Galerkin solution of (psi, v)_Y = b_k(phi_j, v),
    so psi_j(mu) = sum_k theta_k(mu) psi_{k,j} spans the projected optimal
    test space and the n x n Petrov-Galerkin system reproduces the reduced
    saddle solution exactly.
    """

    def __init__(self, problem, pair):
        if problem.riesz_is_parametric:
            raise UnsupportedError(
                "online test basis needs a parameter-independent Y-norm on the piece"
            )
        self.problem = problem
        self.pair = pair
        R_n = pair.test_gramian(problem.piece.midpoint)
        self.coeffs = [
            np.linalg.solve(R_n, pair.b_hat(k)) for k in range(problem.op.m_B)
        ]  # m x n each

    def assembled(self, mu):
        """Truth coefficient vectors of psi_j(mu), as columns."""
        th = self.problem.op.theta(mu)
        P = sum(t * c for t, c in zip(th, self.coeffs))
        return self.pair.V @ P

    def check_residuals(self, k):
        """max variational residual of psi_{k, j} over the reduced test space."""
        R_n = self.pair.test_gramian(self.problem.piece.midpoint)
        res = R_n @ self.coeffs[k] - self.pair.b_hat(k)
        return float(np.abs(res).max())


def online_pg_solve(problem, mu, pair, otb, data=None, boundary_data=None):
    """n x n Petrov-Galerkin solve b_mu(p_n, psi_j(mu)) = <data, psi_j(mu)>.

    Equals the p-component of the reduced saddle solve (with the penalty
    block folded in for CD).
    """
    problem.check_mu(mu)
    th = problem.op.theta(mu)
    m_B = problem.op.m_B
    # A[i, j] = b_mu(phi_j, psi_i(mu)) = sum_{k,l} th_k th_l (P_k^T B_l)[i, j]
    A = np.zeros((pair.n, pair.n))
    for k in range(m_B):
        if th[k] == 0.0:
            continue
        Pk = otb.coeffs[k]
        for l in range(m_B):
            if th[l] != 0.0:
                A += th[k] * th[l] * (Pk.T @ pair.b_hat(l))
    if problem.penalty is not None:
        A += problem.omega * pair.h_n()
    F_n, g_n = reduced_rhs(problem, mu, pair, data, boundary_data)
    rhs = np.zeros(pair.n)
    for k in range(m_B):
        if th[k] != 0.0:
            rhs += th[k] * (otb.coeffs[k].T @ F_n)
    rhs -= g_n
    try:
        return sla.solve(A, rhs, assume_a="sym")
    except np.linalg.LinAlgError:
        raise UnstableError("online Petrov-Galerkin system singular") from None
