"""Inner greedy: worst-case inf-sup / delta-proximality diagnostics over
the sample set, supremizer computation, and the two enrichment loops.

Both loops share the same generalized eigenvalue pencil (captured-energy
matrix against the trial Gramian) but reach it through different
factorizations: the inf-sup loop whitens the cross-Gramian and takes a
smallest singular value, the delta loop solves the Rayleigh-quotient
problem directly.  With the graph norm the two diagnostics satisfy
sigma^2 + delta^2 = 1 identically, which makes the loops select the same
enrichments.

For the CD problem the penalty block is part of the extended test space
and is never reduced, so its capture is exact: both the trial Gramian
and the captured-energy matrix carry + omega * H_n.  Without this
augmentation the inf-sup constant could not reach its target even at
full supremizer saturation.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NotSpd, SingularError, StabilizationStalled
from .la_core import LinearlyDependent, cholesky_spd, fix_sign, spectral_factor

__all__ = [
    "StabConfig",
    "ReducedGramians",
    "EnrichmentRecord",
    "reduced_matrices",
    "inf_sup_constant",
    "delta_rayleigh",
    "supremizer",
    "update_inf_sup",
    "update_delta",
]

_TIE_TOL = 1e-12


@dataclass
class StabConfig:
    """Targets and guards for the inner greedy.

    ``beta_N`` of None defers to the problem's configured truth inf-sup
    constant (generic saddle problems compute theirs from samples).
    """

    zeta: float = 0.5
    delta: float = 0.5
    beta_N: float | None = None
    norm_kind: str = "graph"
    max_enrichments: int = 400
    factorization: str = "cholesky"  # for the inf-sup whitening

    def __post_init__(self):
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.norm_kind not in ("graph", "native"):
            raise ValueError(f"unknown norm_kind {self.norm_kind!r}")
        if self.factorization not in ("cholesky", "spectral"):
            raise ValueError(f"unknown factorization {self.factorization!r}")

    def effective_beta(self, problem):
        return self.beta_N if self.beta_N is not None else getattr(problem, "beta_N", 1.0)


@dataclass
class ReducedGramians:
    """Cross-Gramian and the two Gramians entering the diagnostics."""

    B_n: np.ndarray
    R_Yn: np.ndarray
    R_Xn: np.ndarray
    H_n: np.ndarray | None = None


@dataclass
class EnrichmentRecord:
    mu: float
    value_before: float
    test_dim_after: int
    q: np.ndarray | None = None


def reduced_matrices(problem, mu, pair, norm_kind="graph"):
    """Assemble the reduced Gramians at one parameter from offline tensors."""
    if pair.n == 0:
        raise SingularError("empty trial basis has no reduced Gramians")
    B_n = pair.cross_gramian(mu)
    R_Yn = pair.test_gramian(mu)
    if norm_kind == "graph":
        R_Xn = pair.xhat_gramian(mu)
    else:
        R_Xn = pair.x_mass()
        if problem.penalty is not None:
            R_Xn = R_Xn + problem.omega * pair.h_n()
    H_n = pair.h_n() if problem.penalty is not None else None
    return ReducedGramians(B_n=B_n, R_Yn=R_Yn, R_Xn=R_Xn, H_n=H_n)


def _captured_energy(problem, grams):
    """M = B_n^T R_Yn^{-1} B_n, plus the exactly-captured penalty block.

    Falls back to a spectrally clipped pseudo-inverse when the test
    Gramian is numerically rank deficient at this parameter (the
    Y_mu-norms need not be uniformly equivalent); clipping only discards
    test directions of negligible Y_mu-norm and underestimates the
    capture, which is the conservative direction.
    """
    n = grams.R_Xn.shape[0]
    if grams.B_n.shape[0]:
        try:
            R = cholesky_spd(grams.R_Yn)
            W = R.solve_lt(grams.B_n)
            M = W.T @ W
        except NotSpd:
            w, Q = np.linalg.eigh(grams.R_Yn)
            keep = w > 1e-12 * max(float(w[-1]), 1e-300)
            Wh = (Q[:, keep].T @ grams.B_n) / np.sqrt(w[keep])[:, None]
            M = Wh.T @ Wh
    else:
        M = np.zeros((n, n))
    if grams.H_n is not None:
        M = M + problem.omega * grams.H_n
    return 0.5 * (M + M.T)


def inf_sup_constant(problem, mu, pair, norm_kind="graph", factorization="cholesky"):
    """Worst-case discrete inf-sup constant and its infimizer at mu.

    The trial Gramian is whitened with a Cholesky or spectral factor
    R_Xn = L^T L and the constant is the smallest singular value of the
    whitened captured-energy pencil; the infimizer is mapped back through
    L^{-1} and sign-fixed.
    """
    grams = reduced_matrices(problem, mu, pair, norm_kind)
    M = _captured_energy(problem, grams)
    if factorization == "spectral":
        LX = spectral_factor(grams.R_Xn)
    else:
        LX = cholesky_spd(grams.R_Xn)
    DtD = LX.solve_lt(LX.solve_lt(M).T)
    DtD = 0.5 * (DtD + DtD.T)
    w, Q = np.linalg.eigh(DtD)
    sigma = math.sqrt(max(float(w[0]), 0.0))
    q = fix_sign(LX.solve_l(Q[:, 0]))
    return sigma, q


def delta_rayleigh(problem, mu, pair, norm_kind="graph"):
    """(delta_max^2, maximizer) of the proximality defect Rayleigh quotient.

    delta^2 = max_q q^T (R_Xn - M) q / q^T R_Xn q, the relative energy of
    supremizers missed by the reduced test space; lies in [0, 1].
    """
    grams = reduced_matrices(problem, mu, pair, norm_kind)
    M = _captured_energy(problem, grams)
    A = grams.R_Xn - M
    try:
        w, Q = sla.eigh(0.5 * (A + A.T), grams.R_Xn)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        raise SingularError("trial Gramian not SPD in delta_rayleigh") from None
    d2 = float(np.clip(w[-1], 0.0, 1.0 + 1e-10))
    q = fix_sign(Q[:, -1])
    return d2, q


def supremizer(problem, mu, q, pair):
    """Truth test vector R_Y(mu)^{-1} B(mu) Z q attaining the sup at mu."""
    q = np.asarray(q, dtype=float)
    if not np.any(q):
        raise ValueError("supremizer of the zero vector is undefined")
    Bq = problem.op.apply(mu, pair.lift_trial(q))
    return problem.riesz_solve(mu, Bq)


def _select_worst(values, samples, minimize):
    """Index of the extremal value; ties within 1e-12 go to the smallest mu."""
    values = np.asarray(values, dtype=float)
    ext = values.min() if minimize else values.max()
    tol = _TIE_TOL * max(1.0, abs(ext))
    if minimize:
        candidates = np.flatnonzero(values <= ext + tol)
    else:
        candidates = np.flatnonzero(values >= ext - tol)
    return int(candidates[np.argmin(np.asarray(samples)[candidates])])


def _enrichment_loop(problem, pair, cfg, samples, diagnostic, target_met, describe):
    records = []
    for _ in range(cfg.max_enrichments + 1):
        vals, vecs = [], []
        for mu in samples:
            v, q = diagnostic(mu)
            vals.append(v)
            vecs.append(q)
        k = _select_worst(vals, samples, minimize=describe == "inf-sup")
        worst_val, worst_mu, worst_q = vals[k], samples[k], vecs[k]
        if target_met(worst_val):
            return records
        if len(records) >= cfg.max_enrichments:
            raise StabilizationStalled(
                f"{describe} target missed after {len(records)} enrichments",
                worst_mu=worst_mu,
                worst_value=worst_val,
            )
        vbar = supremizer(problem, worst_mu, worst_q, pair)
        try:
            pair.append_test(vbar, worst_mu)
        except LinearlyDependent:
            raise StabilizationStalled(
                f"{describe}: dependent enrichment at mu = {worst_mu} "
                f"with value {worst_val:.3e}",
                worst_mu=worst_mu,
                worst_value=worst_val,
            ) from None
        records.append(
            EnrichmentRecord(
                mu=float(worst_mu),
                value_before=float(worst_val),
                test_dim_after=pair.m,
                q=np.array(worst_q, dtype=float),
            )
        )
    raise StabilizationStalled(f"{describe} loop exceeded the enrichment budget")


def update_inf_sup(problem, pair, cfg, samples):
    """Enrich the test space until min over samples of sigma >= zeta * beta_N."""
    target = cfg.zeta * cfg.effective_beta(problem)

    def diagnostic(mu):
        return inf_sup_constant(problem, mu, pair, cfg.norm_kind, cfg.factorization)

    return _enrichment_loop(
        problem, pair, cfg, samples, diagnostic, lambda v: v >= target, "inf-sup"
    )


def update_delta(problem, pair, cfg, samples):
    """Enrich the test space until max over samples of delta^2 <= delta^2."""
    target = cfg.delta ** 2

    def diagnostic(mu):
        return delta_rayleigh(problem, mu, pair, cfg.norm_kind)

    return _enrichment_loop(
        problem, pair, cfg, samples, diagnostic, lambda v: v <= target, "delta"
    )


def stability_sweep(problem, pair, cfg, samples):
    """Post-condition recheck: per-mu (sigma, delta^2) arrays."""
    sig = np.array([inf_sup_constant(problem, mu, pair, cfg.norm_kind)[0] for mu in samples])
    d2 = np.array([delta_rayleigh(problem, mu, pair, cfg.norm_kind)[0] for mu in samples])
    return sig, d2
