import numpy as np
import pytest
import scipy.sparse as sp

from dgreedy.errors import LinearlyDependent, NotSpd, ShapeError, SingularError
from dgreedy.la_core import (
    cholesky_spd,
    gram_schmidt_in,
    min_singular,
    solve_sym_indefinite,
    spectral_factor,
    spectral_spd,
)


def test_cholesky_identity():
    f = cholesky_spd(np.eye(2))
    assert np.allclose(f.factor, np.eye(2))


def test_cholesky_diagonal():
    f = cholesky_spd(np.diag([4.0, 9.0]))
    assert np.allclose(f.factor, np.diag([2.0, 3.0]))
    assert np.all(np.tril(f.factor) == f.factor)


def test_cholesky_reconstructs_random_spd():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    A = A.T @ A + np.eye(5)
    f = cholesky_spd(A)
    assert np.allclose(f.factor.T @ f.factor, A, atol=1e-12 * np.abs(A).max())
    # lower triangular with positive diagonal
    assert np.allclose(np.triu(f.factor, 1), 0.0)
    assert np.all(np.diag(f.factor) > 0)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotSpd):
        cholesky_spd(np.diag([1.0, -1.0]))


def test_cholesky_solve_helpers():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 6))
    A = A.T @ A + 6 * np.eye(6)
    f = cholesky_spd(A)
    B = rng.standard_normal((6, 3))
    assert np.allclose(f.factor.T @ f.solve_lt(B), B)
    assert np.allclose(f.factor @ f.solve_l(B), B)
    assert np.allclose(f.right_solve_l(B.T) @ f.factor, B.T)


def test_spectral_diagonal_sorting():
    w, V = spectral_spd(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [3.0, 2.0, 1.0])
    assert np.allclose(V.T @ V, np.eye(3))


def test_spectral_identity():
    w, V = spectral_spd(np.eye(3))
    assert np.allclose(w, 1.0)
    assert np.allclose(V.T @ V, np.eye(3))


def test_spectral_matches_characteristic_roots():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((3, 3))
    A = 0.5 * (A + A.T)
    w, V = spectral_spd(A)
    roots = np.sort(np.roots(np.poly(A)))[::-1]
    assert np.allclose(w, roots.real, atol=1e-9)
    assert np.allclose(V @ np.diag(w) @ V.T, A, atol=1e-10)


def test_spectral_factor_reconstructs():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 4))
    A = A.T @ A + np.eye(4)
    f = spectral_factor(A)
    assert np.allclose(f.factor.T @ f.factor, A, atol=1e-10)
    B = rng.standard_normal((4, 2))
    assert np.allclose(f.factor.T @ f.solve_lt(B), B)


def test_min_singular_identity_and_diag():
    t = min_singular(np.eye(2))
    assert t.sigma_min == pytest.approx(1.0)
    t = min_singular(np.diag([3.0, 2.0]))
    assert t.sigma_min == pytest.approx(2.0)
    assert np.allclose(t.right_vector, [0.0, 1.0])


def test_min_singular_matches_gram_eigenvalue():
    rng = np.random.default_rng(4)
    D = rng.standard_normal((4, 2))
    t = min_singular(D)
    lam = np.linalg.eigvalsh(D.T @ D)[0]
    assert t.sigma_min ** 2 == pytest.approx(lam, abs=1e-10)
    # ||D v|| = sigma ||v||
    assert np.linalg.norm(D @ t.right_vector) == pytest.approx(
        t.sigma_min, rel=1e-8
    )


def test_min_singular_shape_error():
    with pytest.raises(ShapeError):
        min_singular(np.ones((2, 3)))


def test_min_singular_rayleigh_complement():
    # sigma_min^2 + max Rayleigh of (I - D^T D) = 1 for any D
    rng = np.random.default_rng(5)
    D = rng.standard_normal((6, 3))
    D /= np.linalg.norm(D, 2) + 0.5  # keep spectrum below 1
    t = min_singular(D)
    w = np.linalg.eigvalsh(np.eye(3) - D.T @ D)
    assert t.sigma_min ** 2 + w[-1] == pytest.approx(1.0, abs=1e-12)


def test_gram_schmidt_basics():
    G = np.eye(3)
    basis = np.eye(3)[:, :1]
    w = gram_schmidt_in(G, basis, np.array([0.0, 1.0, 0.0]))
    assert np.allclose(w, [0.0, 1.0, 0.0])
    with pytest.raises(LinearlyDependent):
        gram_schmidt_in(G, basis, np.array([2.0, 0.0, 0.0]))


def test_gram_schmidt_random_gramian():
    rng = np.random.default_rng(6)
    G = rng.standard_normal((6, 6))
    G = G.T @ G + 6 * np.eye(6)
    basis = np.zeros((6, 0))
    for _ in range(4):
        basis_new = gram_schmidt_in(G, basis, rng.standard_normal(6))
        basis = np.column_stack([basis, basis_new])
    assert np.allclose(basis.T @ G @ basis, np.eye(4), atol=1e-8)


def test_gram_schmidt_idempotent():
    rng = np.random.default_rng(7)
    G = rng.standard_normal((5, 5))
    G = G.T @ G + 5 * np.eye(5)
    basis = gram_schmidt_in(G, np.zeros((5, 0)), rng.standard_normal(5)).reshape(-1, 1)
    w = gram_schmidt_in(G, np.zeros((5, 0)), basis[:, 0])
    assert np.allclose(w, basis[:, 0], atol=1e-10)


def test_solve_sym_indefinite_identity_and_hand_case():
    b = np.array([1.0, 2.0])
    assert np.allclose(solve_sym_indefinite(sp.eye(2).tocsc(), b), b)
    K = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    x = solve_sym_indefinite(K, np.array([1.0, 0.0]))
    assert np.allclose(x, [0.0, 1.0])


def test_solve_sym_indefinite_residual():
    rng = np.random.default_rng(8)
    A = sp.random(40, 40, density=0.2, random_state=9)
    K = (A + A.T + 10 * sp.eye(40)).tocsc()
    K[:20, :20] *= -1  # make it indefinite
    K = ((K + K.T) / 2).tocsc()
    rhs = rng.standard_normal(40)
    x = solve_sym_indefinite(K, rhs)
    assert np.linalg.norm(K @ x - rhs) <= 1e-10 * (
        sp.linalg.norm(K) * np.linalg.norm(x) + np.linalg.norm(rhs)
    )


def test_solve_sym_indefinite_singular():
    K = sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularError):
        solve_sym_indefinite(K, np.array([1.0, 1.0]))
