"""Reduced trial/test pair with cached offline tensors.

Trial basis columns are coefficient vectors in the truth trial space,
orthonormalized in the problem's snapshot Gramian; test basis columns are
orthonormalized in the Y_mu-product of the parameter they were enriched
at.  All reduced (cross-)Gramians needed online are cached per component
and invalidated on enrichment.

The trial graph Gramian is the truth-level one, ||P_{Y_N} R^{-1} B q||^2:
it only changes when the trial basis grows, so its per-parameter blocks
are cached across the whole stabilization loop.  Measuring
delta-proximality in this norm (rather than the L2 trial norm, which it
approaches only when the truth test space is rich) is what guarantees
that enriching with the worst supremizer removes that defect exactly and
the inner greedy terminates.
"""

import numpy as np

from .la_core import LinearlyDependent, gram_schmidt_in


class ReducedPair:
    """Trial basis Z (n columns) and test basis V (m columns) for one problem."""

    def __init__(self, problem):
        self.problem = problem
        self.Z = np.zeros((problem.n_trial, 0))
        self.V = np.zeros((problem.n_test, 0))
        self._bz = [np.zeros((problem.n_test, 0)) for _ in problem.op.components]
        self._w = (
            [np.zeros((problem.n_test, 0)) for _ in problem.op.components]
            if problem.kind == "cd"
            else None
        )
        self._snapshot_gram = problem.snapshot_gram()
        self._version = 0
        self._trial_version = 0
        self._cache = {}
        self._trial_cache = {}

    # -- dimensions ---------------------------------------------------------
    @property
    def n(self):
        return self.Z.shape[1]

    @property
    def m(self):
        return self.V.shape[1]

    @property
    def version(self):
        return self._version

    def _memo(self, key, make):
        full_key = (key, self._version)
        if full_key not in self._cache:
            self._cache[full_key] = make()
        return self._cache[full_key]

    def _memo_trial(self, key, make):
        full_key = (key, self._trial_version)
        if full_key not in self._trial_cache:
            self._trial_cache[full_key] = make()
        return self._trial_cache[full_key]

    # -- enrichment ----------------------------------------------------------
    def append_trial(self, vec, rtol=1e-10):
        """G-orthonormalize and append a trial vector; LinearlyDependent to reject."""
        w = gram_schmidt_in(self._snapshot_gram, self.Z, np.asarray(vec, float), rtol)
        self.Z = np.column_stack([self.Z, w])
        for k, comp in enumerate(self.problem.op.components):
            col = comp @ w
            self._bz[k] = np.column_stack([self._bz[k], col])
            if self._w is not None:
                lu = self.problem.riesz_lu(self.problem.piece.midpoint)
                self._w[k] = np.column_stack([self._w[k], lu.solve(col)])
        self._version += 1
        self._trial_version += 1
        self._cache.clear()
        self._trial_cache.clear()
        return w

    def _project_out_test(self, v, R):
        """R-orthogonal projection of v onto the complement of span(V).

        Exact for an arbitrary stored basis: uses the Gramian V^T R V with
        a spectrally clipped pseudo-inverse (the Y_mu-norms need not be
        uniformly equivalent, so the Gramian can be poorly conditioned at
        parameters far from the enrichment points).
        """
        c = self.V.T @ (R @ v)
        G = self.V.T @ (R @ self.V)
        w_eig, Q = np.linalg.eigh(0.5 * (G + G.T))
        keep = w_eig > 1e-14 * max(float(w_eig[-1]), 1e-300)
        coef = Q[:, keep] @ ((Q[:, keep].T @ c) / w_eig[keep])
        return v - self.V @ coef

    def append_test(self, vec, mu, rtol=1e-10):
        """Accept a test vector in the Y_mu-product and append it.

        Acceptance/rejection (residual below ``rtol`` of the input norm)
        happens in the Y_mu-product of the enrichment parameter, exactly as
        in the termination argument.  The accepted vector is stored
        re-orthonormalized against the basis in the fixed reference
        product, which preserves the span but keeps the test Gramians well
        conditioned at every parameter.
        """
        R = self.problem.riesz_matrix(mu)
        v = np.asarray(vec, dtype=float)
        norm0 = float(np.sqrt(max(v @ (R @ v), 0.0)))
        if norm0 == 0.0:
            raise LinearlyDependent("zero test vector")
        if self.m:
            v = self._project_out_test(v, R)
            v = self._project_out_test(v, R)
            norm = float(np.sqrt(max(v @ (R @ v), 0.0)))
            if norm < rtol * norm0:
                raise LinearlyDependent(
                    f"test residual {norm:.3e} below {rtol:.0e} * {norm0:.3e}"
                )
        else:
            norm = norm0
        w = v / norm
        R_ref = self.problem.riesz_matrix(self.problem.piece.midpoint)
        try:
            w = gram_schmidt_in(R_ref, self.V, w, rtol=1e-13)
        except LinearlyDependent:
            pass  # keep the Y_mu-normalized vector; the span was accepted
        self.V = np.column_stack([self.V, w])
        self._version += 1
        self._cache.clear()
        return w

    def adopt_test_basis(self, V):
        """Replace the test basis wholesale (used by iterative tightening)."""
        self.V = np.asarray(V, dtype=float).copy()
        self._version += 1
        self._cache.clear()

    # -- offline tensors -------------------------------------------------------
    def bz(self, k):
        """B_k Z in truth test coordinates."""
        return self._bz[k]

    def w_columns(self, k):
        """R_Y^{-1} B_k Z (CD only; the piece Riesz map is mu-independent)."""
        return self._w[k]

    def b_hat(self, k):
        """V^T B_k Z."""
        return self._memo(("b_hat", k), lambda: self.V.T @ self._bz[k])

    def r_hat(self, j):
        """V^T R_j V for the j-th Riesz component."""
        return self._memo(
            ("r_hat", j), lambda: self.V.T @ (self.problem.riesz_y.components[j] @ self.V)
        )

    def x_mass(self):
        """Z^T M Z over the trial mass."""
        return self._memo_trial(
            "x_mass", lambda: self.Z.T @ (self.problem.trial_mass() @ self.Z)
        )

    def h_n(self):
        """Z^T H_b Z (CD penalty block; zeros otherwise)."""
        if self.problem.penalty is None:
            return np.zeros((self.n, self.n))
        return self._memo_trial(
            "h_n", lambda: self.Z.T @ (self.problem.penalty @ self.Z)
        )

    def graph_tensor(self, k, l):
        """(B_k Z)^T R_Y^{-1} (B_l Z) from the precomputed truth solves (CD)."""
        return self._memo_trial(("graph", k, l), lambda: self._bz[k].T @ self._w[l])

    # -- parameter assembly ------------------------------------------------------
    def cross_gramian(self, mu):
        """B_n(mu) = V^T B(mu) Z."""
        th = self.problem.op.theta(mu)
        out = np.zeros((self.m, self.n))
        for k, t in enumerate(th):
            if t != 0.0:
                out += t * self.b_hat(k)
        return out

    def bz_at(self, mu):
        """B(mu) Z in truth test coordinates."""
        th = self.problem.op.theta(mu)
        out = np.zeros(self._bz[0].shape)
        for k, t in enumerate(th):
            if t != 0.0:
                out += t * self._bz[k]
        return out

    def test_gramian(self, mu):
        """R_Yn(mu) = V^T R_Y(mu) V."""
        th = self.problem.riesz_y.theta(mu)
        out = np.zeros((self.m, self.m))
        for j, t in enumerate(th):
            if t != 0.0:
                out += t * self.r_hat(j)
        return 0.5 * (out + out.T)

    def xhat_gramian(self, mu):
        """Truth graph Gramian of the trial basis at mu (+ penalty for CD).

        CD assembles it from the cached truth solves (the piece Riesz map
        is mu-independent); other kinds solve against the cached R_Y(mu)
        factor, once per trial-basis state and parameter.
        """
        if self.problem.kind == "cd":
            th = self.problem.op.theta(mu)
            out = np.zeros((self.n, self.n))
            for k, tk in enumerate(th):
                if tk == 0.0:
                    continue
                for l, tl in enumerate(th):
                    if tl != 0.0:
                        out += tk * tl * self.graph_tensor(k, l)
            out = 0.5 * (out + out.T)
            return out + self.problem.omega * self.h_n()

        def make():
            BZ = self.bz_at(mu)
            lu = self.problem.riesz_lu(mu)
            W = np.column_stack([lu.solve(BZ[:, j]) for j in range(BZ.shape[1])])
            G = BZ.T @ W
            return 0.5 * (G + G.T)

        return self._memo_trial(("xhat", float(mu)), make)

    def lift_trial(self, coeffs):
        return self.Z @ np.asarray(coeffs, dtype=float)

    def lift_test(self, coeffs):
        return self.V @ np.asarray(coeffs, dtype=float)
