"""Dense and sparse linear algebra kernels used by every other module.

Dense kernels cover the reduced-space work (factorizations, smallest
singular triplets, Gramian orthonormalization); sparse symmetric
indefinite solves back the truth-level saddle systems.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    LinearlyDependent,
    NotSpd,
    NumericalError,
    ShapeError,
    SingularError,
)

__all__ = [
    "SpdFactor",
    "SingularTriplet",
    "cholesky_spd",
    "spectral_spd",
    "spectral_factor",
    "min_singular",
    "gram_schmidt_in",
    "solve_sym_indefinite",
    "splu_factor",
    "fix_sign",
]


def fix_sign(v):
    """Flip ``v`` so its entry of largest magnitude is positive.

    First index wins among ties; makes eigen/singular vector based
    enrichment sequences deterministic.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return v
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


@dataclass(frozen=True)
class SpdFactor:
    """Factor L of an SPD matrix with A = L^T L.

    ``kind`` is "cholesky" (L lower-triangular with positive diagonal) or
    "spectral" (L = Lambda^(1/2) Q from the eigen-decomposition, rows of Q
    the eigenvectors in descending eigenvalue order).
    """

    factor: np.ndarray
    kind: str
    eigvals: np.ndarray | None = field(default=None, repr=False)
    eigvecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self):
        return self.factor.shape[0]

    def solve_lt(self, B):
        """Return L^{-T} B."""
        B = np.asarray(B, dtype=float)
        if self.kind == "cholesky":
            return sla.solve_triangular(self.factor, B, lower=True, trans="T")
        # L^T = Q^T Lambda^(1/2)  =>  L^{-T} = Lambda^(-1/2) Q applied from the left
        s = np.sqrt(self.eigvals)
        return (self.eigvecs.T @ B) / s[:, None] if B.ndim == 2 else (self.eigvecs.T @ B) / s

    def solve_l(self, B):
        """Return L^{-1} B."""
        B = np.asarray(B, dtype=float)
        if self.kind == "cholesky":
            return sla.solve_triangular(self.factor, B, lower=True)
        s = np.sqrt(self.eigvals)
        return self.eigvecs @ (B / s[:, None]) if B.ndim == 2 else self.eigvecs @ (B / s)

    def right_solve_l(self, B):
        """Return B L^{-1}."""
        return self.solve_lt(np.asarray(B, dtype=float).T).T


@dataclass(frozen=True)
class SingularTriplet:
    sigma_min: float
    right_vector: np.ndarray


def _check_symmetric(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name}: expected a square matrix, got {A.shape}")
    if A.shape[0] < 1:
        raise ShapeError(f"{name}: dimension must be >= 1")
    scale = np.abs(A).max() if A.size else 0.0
    if not np.allclose(A, A.T, atol=1e-10 * max(scale, 1.0)):
        raise ShapeError(f"{name}: matrix is not symmetric")
    return 0.5 * (A + A.T)


def cholesky_spd(A):
    """Factor a symmetric positive definite A as A = L^T L, L lower-triangular.

    Uses the reversed-ordering Cholesky so that L itself comes out lower
    triangular (numpy's plain factorization gives A = C C^T instead).
    """
    A = _check_symmetric(A, "cholesky_spd")
    rev = A[::-1, ::-1]
    try:
        C = np.linalg.cholesky(rev)
    except np.linalg.LinAlgError:
        raise NotSpd(
            f"non-positive pivot: matrix of dim {A.shape[0]} not SPD within 1e-12*|A|"
        ) from None
    L = C[::-1, ::-1].T
    return SpdFactor(factor=L, kind="cholesky")


def spectral_spd(A):
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with orthonormal eigenvector
    columns and A = V diag(w) V^T.  Each eigenvector is sign-fixed.
    """
    A = _check_symmetric(A, "spectral_spd")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-iteration failed: {exc}") from None
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order].copy()
    for j in range(V.shape[1]):
        V[:, j] = fix_sign(V[:, j])
    return w, V


def spectral_factor(A):
    """SpdFactor with L = Lambda^(1/2) Q, so L^T L = A (A must be SPD)."""
    w, V = spectral_spd(A)
    if w.size and w[-1] <= 1e-14 * max(abs(w[0]), 1.0):
        raise NotSpd(f"eigenvalue {w[-1]:.3e} too small for a spectral factor")
    L = np.sqrt(w)[:, None] * V.T
    return SpdFactor(factor=L, kind="spectral", eigvals=w, eigvecs=V)


def min_singular(D):
    """Smallest singular value and right singular vector of an m x n matrix.

    Computed through the symmetric eigen-solve of D^T D (the reduced
    dimensions stay small).  The right vector carries unit l2 norm and the
    largest-magnitude-entry-positive sign convention.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m, n = D.shape
    if m < n:
        raise ShapeError(f"min_singular: need m >= n, got {D.shape}")
    if n < 1:
        raise ShapeError("min_singular: empty matrix")
    w, V = np.linalg.eigh(D.T @ D)
    sigma = float(np.sqrt(max(w[0], 0.0)))
    v = fix_sign(V[:, 0])
    v = v / np.linalg.norm(v)
    return SingularTriplet(sigma_min=sigma, right_vector=v)


def gram_schmidt_in(G, basis, v, rtol=1e-10):
    """Two-pass modified Gram-Schmidt of ``v`` against a G-orthonormal basis.

    Parameters
    ----------
    G : (N, N) SPD Gramian (dense or sparse) defining the inner product.
    basis : (N, k) matrix of G-orthonormal columns (k may be 0).
    v : (N,) candidate vector.

    Returns
    -------
    w : the G-normalized residual, basis^T G w = 0 and w^T G w = 1.

    Raises
    ------
    LinearlyDependent
        When the residual G-norm falls below ``rtol`` times the input
        G-norm (rejection signal).
    """
    v = np.asarray(v, dtype=float).copy()
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis.reshape(-1, 1) if basis.size else np.zeros((v.size, 0))
    if basis.shape[0] != v.shape[0]:
        raise ShapeError("gram_schmidt_in: basis and vector dimensions differ")

    norm0 = float(np.sqrt(max(v @ (G @ v), 0.0)))
    if norm0 == 0.0:
        raise LinearlyDependent("zero input vector")
    for _ in range(2):
        for j in range(basis.shape[1]):
            b = basis[:, j]
            v -= (b @ (G @ v)) * b
        norm = float(np.sqrt(max(v @ (G @ v), 0.0)))
        if norm < rtol * norm0:
            raise LinearlyDependent(
                f"residual G-norm {norm:.3e} below {rtol:.0e} * {norm0:.3e}"
            )
        v = v / norm
    return v


def splu_factor(K):
    """Factor a sparse matrix with splu, mapping failures to SingularError.

    splu applies a fill-reducing column pre-ordering (COLAMD).
    """
    K = sp.csc_matrix(K)
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularError(str(exc)) from None
    if not np.all(np.isfinite(lu.U.diagonal())):
        raise SingularError("non-finite pivot in LU factor")
    return lu


def solve_sym_indefinite(K, rhs, rtol=1e-10, lu=None):
    """Direct sparse solve of a symmetric (possibly indefinite) system.

    One step of iterative refinement runs when the first residual exceeds
    the tolerance.  A prefactored ``lu`` object may be passed to amortize
    repeated solves with the same matrix.
    """
    K = sp.csc_matrix(K)
    rhs = np.asarray(rhs, dtype=float)
    if lu is None:
        lu = splu_factor(K)
    x = lu.solve(rhs)
    norm_K = spla.norm(K) if K.nnz else 0.0
    res = rhs - K @ x
    bound = rtol * (norm_K * np.linalg.norm(x) + np.linalg.norm(rhs))
    if np.linalg.norm(res) > bound:
        x = x + lu.solve(res)
        res = rhs - K @ x
        if np.linalg.norm(res) > max(bound, 1e-30):
            raise SingularError(
                f"residual {np.linalg.norm(res):.3e} above tolerance after refinement"
            )
    return x
