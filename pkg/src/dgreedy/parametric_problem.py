"""Affine parametric operators, the parameter domain cover, Riesz maps,
and builders for the two model problems.

The convection field is b(mu) = (cos mu, sin mu) with mu in radians; the
parameter interval lives strictly inside (0, pi) so the inflow/outflow
edge sets are constant on each of the two cover pieces (cos mu changes
sign at pi/2, sin mu stays positive).
"""

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem_grid as fg
from .errors import ConfigError, DomainError, SingularError
from .la_core import splu_factor

EDGE_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


class ThetaMap:
    """Scalar coefficient functions of an affine decomposition."""

    def __init__(self, funcs):
        self.funcs = tuple(funcs)

    def __len__(self):
        return len(self.funcs)

    def __call__(self, mu):
        return np.array([f(mu) for f in self.funcs], dtype=float)

    def quadratic(self):
        """Symmetric product family {theta_k * theta_l, k <= l}."""
        funcs = []
        m = len(self.funcs)
        for k in range(m):
            for l in range(k, m):
                fk, fl = self.funcs[k], self.funcs[l]
                funcs.append(lambda mu, fk=fk, fl=fl: fk(mu) * fl(mu))
        return ThetaMap(funcs)


class AffineOperator:
    """Sum_k theta_k(mu) * B_k with parameter independent sparse components."""

    def __init__(self, components, theta, interval=None):
        components = [sp.csr_matrix(c) for c in components]
        if len(components) != len(theta):
            raise ConfigError("theta", "component and coefficient counts differ")
        shapes = {c.shape for c in components}
        if len(shapes) != 1:
            raise ConfigError("components", f"inconsistent shapes {shapes}")
        self.components = components
        self.theta = theta
        self.interval = interval

    @property
    def m_B(self):
        return len(self.components)

    @property
    def shape(self):
        return self.components[0].shape

    def check_domain(self, mu):
        if self.interval is not None:
            lo, hi = self.interval
            if not (lo - 1e-12 <= mu <= hi + 1e-12):
                raise DomainError(f"mu = {mu} outside [{lo}, {hi}]")

    def at(self, mu):
        self.check_domain(mu)
        th = self.theta(mu)
        out = th[0] * self.components[0]
        for t, c in zip(th[1:], self.components[1:]):
            if t != 0.0:
                out = out + t * c
        return out.tocsr()

    def apply(self, mu, x):
        """B(mu) @ x without forming the summed matrix."""
        self.check_domain(mu)
        x = np.asarray(x, dtype=float)
        th = self.theta(mu)
        shape = (self.shape[0],) if x.ndim == 1 else (self.shape[0], x.shape[1])
        out = np.zeros(shape)
        for t, c in zip(th, self.components):
            if t != 0.0:
                out += t * (c @ x)
        return out


def operator_at(op, mu):
    """Assembled sparse matrix of an AffineOperator at one parameter."""
    return op.at(mu)


@dataclass(frozen=True)
class CoverPiece:
    """Parameter subinterval with fixed inflow/outflow edge sets."""

    index: int
    lo: float
    hi: float
    inflow: frozenset
    outflow: frozenset

    def contains(self, mu, tol=1e-12):
        return self.lo - tol <= mu <= self.hi + tol

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class ParameterDomain:
    """Interval of transport angles with an equidistant sample set."""

    interval: tuple = (0.2, math.pi - 0.2)
    sample_count: int = 100

    def __post_init__(self):
        lo, hi = self.interval
        if not (0.0 < lo <= hi < math.pi):
            raise ConfigError("parameter_interval", f"({lo}, {hi}) not inside (0, pi)")
        if self.sample_count < 2:
            raise ConfigError("sample_count", "need at least 2 samples")

    @property
    def samples(self):
        return np.linspace(self.interval[0], self.interval[1], self.sample_count)

    def piece_of(self, mu):
        for piece in cover_pieces(self):
            if piece.contains(mu):
                return piece
        raise DomainError(f"mu = {mu} outside the parameter domain")

    def piece_samples(self, piece):
        s = self.samples
        return s[(s >= piece.lo - 1e-12) & (s <= piece.hi + 1e-12)]


def cover_pieces(domain):
    """Split the domain at pi/2 into pieces with constant edge signatures.

    For mu < pi/2 the flow enters through bottom/left; past pi/2 the
    x-component of b flips and the inflow moves to bottom/right.  The
    split point pi/2 itself belongs to the left piece.
    """
    lo, hi = domain.interval
    half = math.pi / 2.0
    pieces = []
    if lo <= half:
        pieces.append(
            CoverPiece(
                index=0,
                lo=lo,
                hi=min(hi, half),
                inflow=frozenset({"bottom", "left"}),
                outflow=frozenset({"top", "right"}),
            )
        )
    if hi > half:
        pieces.append(
            CoverPiece(
                index=len(pieces),
                lo=max(lo, np.nextafter(half, math.pi)),
                hi=hi,
                inflow=frozenset({"bottom", "right"}),
                outflow=frozenset({"top", "left"}),
            )
        )
    return pieces


class _LruFactorCache:
    """At-most-once splu factorization per key with LRU eviction."""

    def __init__(self, capacity=256):
        self.capacity = capacity
        self._store = OrderedDict()

    def get(self, key, make):
        if key in self._store:
            self._store.move_to_end(key)
            return self._store[key]
        lu = make()
        self._store[key] = lu
        if len(self._store) > self.capacity:
            self._store.popitem(last=False)
        return lu


class AffineForm:
    """Affine SPD form Sum_k theta_k(mu) * A_k (Riesz maps, Gramians)."""

    def __init__(self, components, theta):
        self.components = [sp.csr_matrix(c) for c in components]
        self.theta = theta

    def at(self, mu):
        th = self.theta(mu)
        out = th[0] * self.components[0]
        for t, c in zip(th[1:], self.components[1:]):
            if t != 0.0:
                out = out + t * c
        return out.tocsr()


class TruthDiscretization:
    """Truth spaces, affine operator, Riesz maps and data for one cover piece."""

    def __init__(
        self,
        kind,
        piece,
        trial,
        test,
        operator,
        riesz_y,
        rhs_components,
        riesz_xhat=None,
        penalty=None,
        omega=0.0,
        delta_N=0.5,
        beta_N=1.0,
        riesz_is_parametric=True,
        cache_capacity=256,
    ):
        self.kind = kind
        self.piece = piece
        self.trial = trial
        self.test = test
        self.op = operator
        self.riesz_y = riesz_y
        self.rhs_components = list(rhs_components)
        self.riesz_xhat = riesz_xhat
        self.penalty = penalty
        self.omega = omega
        self.delta_N = delta_N
        self.beta_N = beta_N
        self.riesz_is_parametric = riesz_is_parametric
        self._riesz_cache = _LruFactorCache(cache_capacity)

    # -- parameter plumbing -------------------------------------------------
    @property
    def n_trial(self):
        return self.trial.n_free

    @property
    def n_test(self):
        return self.test.n_free

    def check_mu(self, mu):
        if not self.piece.contains(mu):
            raise DomainError(
                f"mu = {mu} outside piece [{self.piece.lo}, {self.piece.hi}]"
            )

    def operator_at(self, mu):
        self.check_mu(mu)
        return self.op.at(mu)

    def rhs_at(self, mu):
        self.check_mu(mu)
        out = np.zeros(self.n_test)
        for vec, theta in self.rhs_components:
            t = theta(mu)
            if t != 0.0:
                out += t * vec
        return out

    # -- Riesz map on the test space -----------------------------------------
    def riesz_matrix(self, mu):
        self.check_mu(mu)
        return self.riesz_y.at(mu)

    def _riesz_key(self, mu):
        return float(mu) if self.riesz_is_parametric else "piece"

    def riesz_lu(self, mu):
        key = self._riesz_key(mu)
        return self._riesz_cache.get(key, lambda: splu_factor(self.riesz_matrix(mu)))

    def riesz_solve(self, mu, w, rtol=1e-10):
        """x = R_Y(mu)^{-1} w with a cached factorization and one refinement."""
        self.check_mu(mu)
        R = self.riesz_matrix(mu)
        lu = self.riesz_lu(mu)
        w = np.asarray(w, dtype=float)
        x = lu.solve(w)
        res = w - R @ x
        nb = np.linalg.norm(w)
        if np.linalg.norm(res) > rtol * max(nb, np.linalg.norm(x)):
            x = x + lu.solve(res)
            res = w - R @ x
            if np.linalg.norm(res) > 1e-8 * max(nb, np.linalg.norm(x), 1e-300):
                raise SingularError("Riesz solve failed to reach tolerance")
        return x

    def y_norm(self, mu, u):
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(u @ (self.riesz_matrix(mu) @ u), 0.0)))

    # -- trial-space norms ----------------------------------------------------
    def trial_mass(self):
        return self.trial.mass_matrix()

    def xhat_apply(self, mu, p):
        """R_Xhat(mu) @ p: graph Gramian action (plus penalty for CD)."""
        self.check_mu(mu)
        if self.kind == "transport":
            return self.riesz_xhat @ p
        Bp = self.op.apply(mu, p)
        out = self.op.at(mu).T @ self.riesz_solve(mu, Bp)
        if self.penalty is not None:
            out = out + self.omega * (self.penalty @ p)
        return out

    def xhat_norm(self, mu, p):
        p = np.asarray(p, dtype=float)
        return float(np.sqrt(max(p @ self.xhat_apply(mu, p), 0.0)))

    def snapshot_gram(self):
        """Gramian used to orthonormalize trial snapshots (supports @)."""
        if self.kind == "transport":
            return self.riesz_xhat
        return _GraphGram(self, self.piece.midpoint)

    def l2_distance(self, a, b):
        return fg.l2_distance(self.trial, a, b)


class _GraphGram:
    """Matrix-like graph Gramian B^T R^{-1} B + omega H at a fixed parameter."""

    def __init__(self, problem, mu):
        self.problem = problem
        self.mu = mu
        self._B = problem.operator_at(mu)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            out = self._B.T @ self.problem.riesz_solve(self.mu, self._B @ x)
            if self.problem.penalty is not None:
                out = out + self.problem.omega * (self.problem.penalty @ x)
            return out
        return np.column_stack([self @ x[:, j] for j in range(x.shape[1])])


# -- model problem builders ----------------------------------------------------


def build_cd_problem(
    epsilon,
    omega,
    trial_level,
    test_level,
    piece,
    delta_N=0.5,
    beta_N=1.0,
    source=1.0,
):
    """Convection-diffusion problem with weak outflow penalty on one piece.

    Trial functions vanish strongly on the piece's inflow edges only; the
    outflow condition enters through the penalty Gramian H_b scaled by the
    test mesh width.  The test space norm eps*|.|_H1 + ||.||_L2 does not
    depend on mu (constant convection field has zero divergence, c = 1).
    """
    if epsilon <= 0:
        raise ConfigError("epsilon", "must be positive")
    if omega <= 0:
        raise ConfigError("omega", "must be positive")
    if test_level <= trial_level:
        raise ConfigError("test_level", "must exceed trial_level")

    trial = fg.build_space(trial_level, "continuous", piece.inflow)
    test = fg.build_space(test_level, "continuous", fg.EDGES)

    stiff = fg.assemble(trial, test, fg.STIFF)
    conv_x = fg.assemble(trial, test, fg.CONV_X)
    conv_y = fg.assemble(trial, test, fg.CONV_Y)
    mass = fg.assemble(trial, test, fg.MASS)
    theta = ThetaMap(
        (
            lambda mu: 1.0,
            lambda mu: math.cos(mu),
            lambda mu: math.sin(mu),
            lambda mu: 1.0,
        )
    )
    op = AffineOperator(
        [epsilon * stiff, conv_x, conv_y, mass], theta, interval=(piece.lo, piece.hi)
    )

    stiff_y = fg.assemble(test, test, fg.STIFF)
    mass_y = fg.assemble(test, test, fg.MASS)
    riesz_y = AffineForm([epsilon * stiff_y + mass_y], ThetaMap((lambda mu: 1.0,)))

    rhs = [(fg.assemble_rhs(test, source), lambda mu: 1.0)]

    h_test = test.grid.h
    pen = None
    for e in sorted(piece.outflow):
        E = fg.assemble(trial, trial, fg.edge_mass(e))
        pen = E if pen is None else pen + E
    penalty = (pen / h_test).tocsr()

    return TruthDiscretization(
        kind="cd",
        piece=piece,
        trial=trial,
        test=test,
        operator=op,
        riesz_y=riesz_y,
        rhs_components=rhs,
        riesz_xhat=None,
        penalty=penalty,
        omega=omega,
        delta_N=delta_N,
        beta_N=beta_N,
        riesz_is_parametric=False,
    )


def build_transport_problem(
    trial_level,
    test_level,
    piece,
    source=1.0,
    inflow_data=None,
    delta_N=0.5,
    beta_N=1.0,
    cache_capacity=256,
):
    """Pure transport problem b_mu(p, q) = <p, -b(mu).grad q + q> on one piece.

    The trial space is discontinuous Q1 without constraints (X = L2); the
    test space is continuous Q1 vanishing on the complement of the inflow
    boundary.  The test norm ||B*_mu q||_L2 expands into the quadratic
    family {cos^2, cos*sin, sin^2, cos, sin, 1}.
    """
    if test_level <= trial_level:
        raise ConfigError("test_level", "must exceed trial_level")
    trial = fg.build_space(trial_level, "discontinuous")
    test = fg.build_space(test_level, "continuous", piece.outflow)
    if not piece.outflow:
        raise ConfigError("piece", "test space needs outflow constraints")

    adj_x = fg.assemble(trial, test, fg.ADJCONV_X)
    adj_y = fg.assemble(trial, test, fg.ADJCONV_Y)
    mass = fg.assemble(trial, test, fg.MASS)
    base_theta = ThetaMap(
        (lambda mu: math.cos(mu), lambda mu: math.sin(mu), lambda mu: 1.0)
    )
    op = AffineOperator([-adj_x, -adj_y, mass], base_theta, interval=(piece.lo, piece.hi))

    # (B* q, B* w) = cos^2 (qx,wx) + cos sin [(qx,wy)+(qy,wx)] + sin^2 (qy,wy)
    #              - cos [(qx,w)+(q,wx)] - sin [(qy,w)+(q,wy)] + (q,w)
    dxdx = fg.assemble(test, test, fg.DX_DX)
    dydy = fg.assemble(test, test, fg.DY_DY)
    dxdy = fg.assemble(test, test, fg.DX_DY)
    conv_x = fg.assemble(test, test, fg.CONV_X)
    conv_y = fg.assemble(test, test, fg.CONV_Y)
    mass_y = fg.assemble(test, test, fg.MASS)
    riesz_y = AffineForm(
        [
            dxdx,
            dxdy + dxdy.T,
            dydy,
            -(conv_x + conv_x.T),
            -(conv_y + conv_y.T),
            mass_y,
        ],
        ThetaMap(
            (
                lambda mu: math.cos(mu) ** 2,
                lambda mu: math.cos(mu) * math.sin(mu),
                lambda mu: math.sin(mu) ** 2,
                lambda mu: math.cos(mu),
                lambda mu: math.sin(mu),
                lambda mu: 1.0,
            )
        ),
    )

    rhs = [(fg.assemble_rhs(test, source), lambda mu: 1.0)]
    if inflow_data is not None:
        for e in sorted(piece.inflow):
            vec = fg.assemble_edge_functional(test, e, inflow_data, breakpoints=(0.5,))
            if np.abs(vec).max() == 0.0:
                continue
            nx, ny = EDGE_NORMALS[e]
            rhs.append(
                (vec, lambda mu, nx=nx, ny=ny: -(nx * math.cos(mu) + ny * math.sin(mu)))
            )

    return TruthDiscretization(
        kind="transport",
        piece=piece,
        trial=trial,
        test=test,
        operator=op,
        riesz_y=riesz_y,
        rhs_components=rhs,
        riesz_xhat=trial.mass_matrix(),
        penalty=None,
        omega=0.0,
        delta_N=delta_N,
        beta_N=beta_N,
        riesz_is_parametric=True,
        cache_capacity=cache_capacity,
    )
