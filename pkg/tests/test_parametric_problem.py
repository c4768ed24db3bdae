import math

import numpy as np
import pytest

from dgreedy.errors import ConfigError, DomainError
from dgreedy.fem_grid import DiagonalJumpSource, build_space
from dgreedy.parametric_problem import (
    ParameterDomain,
    ThetaMap,
    build_cd_problem,
    build_transport_problem,
    cover_pieces,
    operator_at,
)


def _domain(lo=0.2, hi=math.pi - 0.2, n=10):
    return ParameterDomain(interval=(lo, hi), sample_count=n)


def test_cover_pieces_edges():
    pieces = cover_pieces(_domain())
    assert len(pieces) == 2
    assert pieces[0].inflow == {"bottom", "left"}
    assert pieces[1].inflow == {"bottom", "right"}
    assert pieces[0].contains(0.3)
    assert pieces[1].contains(2.8)
    # split point belongs to the left piece
    assert _domain().piece_of(math.pi / 2).index == 0
    # every sample lands in exactly one piece through piece_of
    d = _domain(n=17)
    counts = [len(d.piece_samples(p)) for p in pieces]
    assert sum(counts) >= d.sample_count


def test_cover_piece_single():
    pieces = cover_pieces(_domain(0.2, 1.4))
    assert len(pieces) == 1
    assert pieces[0].inflow == {"bottom", "left"}


def test_domain_validation():
    with pytest.raises(ConfigError):
        ParameterDomain(interval=(0.0, 1.0), sample_count=5)
    with pytest.raises(ConfigError):
        ParameterDomain(interval=(0.2, math.pi), sample_count=5)
    with pytest.raises(ConfigError):
        ParameterDomain(interval=(0.2, 1.0), sample_count=1)


def test_theta_quadratic_count():
    th = ThetaMap((lambda m: math.cos(m), lambda m: math.sin(m), lambda m: 1.0))
    q = th.quadratic()
    assert len(q) == 6
    vals = q(0.7)
    c, s = math.cos(0.7), math.sin(0.7)
    assert np.allclose(vals, [c * c, c * s, c, s * s, s, 1.0])


@pytest.fixture(scope="module")
def cd_problem():
    piece = cover_pieces(_domain())[0]
    return build_cd_problem(2.0 ** -5, 1e-2, 3, 4, piece)


@pytest.fixture(scope="module")
def tr_problem():
    piece = cover_pieces(_domain())[0]
    return build_transport_problem(2, 3, piece)


def test_cd_component_count(cd_problem):
    assert cd_problem.op.m_B == 4
    th = cd_problem.op.theta(1.0)
    # two parameter-varying coefficients (cos, sin)
    assert th[0] == 1.0 and th[3] == 1.0
    assert th[1] == pytest.approx(math.cos(1.0))
    assert th[2] == pytest.approx(math.sin(1.0))


def test_cd_riesz_spd(cd_problem):
    R = cd_problem.riesz_matrix(1.0).toarray()
    w = np.linalg.eigvalsh(R)
    assert w[0] > 0
    # parameter independent within the piece
    R2 = cd_problem.riesz_matrix(0.3).toarray()
    assert np.allclose(R, R2)


def test_cd_builder_validation():
    piece = cover_pieces(_domain())[0]
    with pytest.raises(ConfigError):
        build_cd_problem(-1.0, 1e-2, 2, 3, piece)
    with pytest.raises(ConfigError):
        build_cd_problem(0.5, 0.0, 2, 3, piece)
    with pytest.raises(ConfigError):
        build_cd_problem(0.5, 1e-2, 3, 3, piece)


def test_transport_quadratic_family(tr_problem):
    assert len(tr_problem.riesz_y.components) == 6
    assert tr_problem.op.m_B == 3


def test_transport_riesz_matches_direct_gramian(tr_problem):
    # oracle: B*q for continuous Q1 q is exactly a discontinuous Q1 function
    # on the same grid; assemble (B*q, B*w)_L2 through that representation
    mu = 0.7
    test = tr_problem.test
    R = tr_problem.riesz_matrix(mu)
    level = test.grid.level
    disc = build_space(level, "discontinuous")
    h = test.grid.h
    nc = test.grid.ncells_side
    c, s = math.cos(mu), math.sin(mu)

    def bstar_disc(qfree):
        qfull = test.prolong(qfree)
        sx, sy = np.meshgrid(np.arange(nc), np.arange(nc), indexing="xy")
        dofs = test.cell_dofs(sx.ravel(), sy.ravel())  # (F, 4)
        q = qfull[dofs]
        vals = np.empty_like(q)
        # corner order (0,0),(1,0),(0,1),(1,1); dx const along x, dy along y
        dx_bottom = (q[:, 1] - q[:, 0]) / h
        dx_top = (q[:, 3] - q[:, 2]) / h
        dy_left = (q[:, 2] - q[:, 0]) / h
        dy_right = (q[:, 3] - q[:, 1]) / h
        grad_x = np.stack([dx_bottom, dx_bottom, dx_top, dx_top], axis=1)
        grad_y = np.stack([dy_left, dy_right, dy_left, dy_right], axis=1)
        vals = -c * grad_x - s * grad_y + q
        return vals.ravel()

    rng = np.random.default_rng(0)
    M_disc = disc.mass_matrix()
    for _ in range(5):
        q = rng.standard_normal(test.n_free)
        w = rng.standard_normal(test.n_free)
        lhs = q @ (R @ w)
        rhs = bstar_disc(q) @ (M_disc @ bstar_disc(w))
        assert lhs == pytest.approx(rhs, abs=1e-10 * max(abs(rhs), 1.0))


def test_transport_riesz_spd(tr_problem):
    R = tr_problem.riesz_matrix(0.7).toarray()
    assert np.linalg.eigvalsh(R)[0] > 0


def test_transport_square_truth_system(tr_problem):
    # free test dofs equal discontinuous trial dofs on one-level-finer grids
    assert tr_problem.n_test == tr_problem.n_trial


def test_operator_at_consistency(tr_problem):
    mu = math.pi / 2
    B = operator_at(tr_problem.op, mu)
    # cos term vanishes: B = (-ADJCONV_Y) + MASS, already the stored components
    ref = tr_problem.op.components[1] + tr_problem.op.components[2]
    assert np.abs((B - ref)).max() < 1e-12
    with pytest.raises(DomainError):
        tr_problem.operator_at(3.1)


def test_affine_matvec_consistency(cd_problem):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(cd_problem.n_trial)
    for mu in (0.25, 0.9, 1.5):
        direct = cd_problem.operator_at(mu) @ x
        accum = cd_problem.op.apply(mu, x)
        assert np.allclose(direct, accum, atol=1e-12 * np.abs(direct).max())


def test_riesz_solve_roundtrip(tr_problem):
    rng = np.random.default_rng(2)
    mu = 0.9
    w = rng.standard_normal(tr_problem.n_test)
    x = tr_problem.riesz_solve(mu, w)
    R = tr_problem.riesz_matrix(mu)
    assert np.linalg.norm(R @ x - w) <= 1e-10 * np.linalg.norm(w)
    assert np.allclose(tr_problem.riesz_solve(mu, np.zeros_like(w)), 0.0)
    # symmetry of the inverse in the duality pairing
    a = rng.standard_normal(tr_problem.n_test)
    b = rng.standard_normal(tr_problem.n_test)
    assert tr_problem.riesz_solve(mu, a) @ b == pytest.approx(
        tr_problem.riesz_solve(mu, b) @ a, rel=1e-10
    )


def test_transport_isometry_ratio_monotone():
    piece = cover_pieces(_domain())[0]
    rng = np.random.default_rng(3)
    ratios = {}
    for test_level in (3, 4):
        pb = build_transport_problem(2, test_level, piece)
        vals = []
        for _ in range(5):
            q = rng.standard_normal(pb.n_trial)
            Bq = pb.op.apply(0.8, q)
            num = math.sqrt(Bq @ pb.riesz_solve(0.8, Bq))
            den = math.sqrt(q @ (pb.trial_mass() @ q))
            vals.append(num / den)
        ratios[test_level] = vals
        assert all(0.0 < r <= 1.0 + 1e-12 for r in vals)
    # richer test space captures more of every supremizer
    rng = np.random.default_rng(3)  # same draws
    pb3 = build_transport_problem(2, 3, piece)
    pb4 = build_transport_problem(2, 4, piece)
    for _ in range(5):
        q = rng.standard_normal(pb3.n_trial)
        r3 = math.sqrt(pb3.op.apply(0.8, q) @ pb3.riesz_solve(0.8, pb3.op.apply(0.8, q)))
        r4 = math.sqrt(pb4.op.apply(0.8, q) @ pb4.riesz_solve(0.8, pb4.op.apply(0.8, q)))
        assert r4 >= r3 - 1e-12


def test_transport_jump_rhs_components():
    piece = cover_pieces(_domain())[0]
    g = lambda x, y: np.where(x <= 0.5, 1.0 - y, 0.0)
    pb = build_transport_problem(2, 3, piece, source=DiagonalJumpSource(1.0, 0.5), inflow_data=g)
    # volume term plus bottom and left inflow terms
    assert len(pb.rhs_components) == 3
    mu = 0.6
    rhs = pb.rhs_at(mu)
    vol = pb.rhs_components[0][0]
    manual = (
        vol
        + pb.rhs_components[1][1](mu) * pb.rhs_components[1][0]
        + pb.rhs_components[2][1](mu) * pb.rhs_components[2][0]
    )
    assert np.allclose(rhs, manual)
    # weights are sin(mu) on bottom, cos(mu) on left
    expected = sorted([math.sin(mu), math.cos(mu)])
    got = sorted([pb.rhs_components[1][1](mu), pb.rhs_components[2][1](mu)])
    assert np.allclose(expected, got)
