"""Command line interface: `dgreedy run` and `dgreedy verify`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import math
import sys

import numpy as np

from .errors import ConfigError, DgreedyError
from .experiments import emit_outputs, parse_config, run_experiment


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dgreedy",
        description="Double-greedy reduced basis runs for transport-dominated problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and emit table/decay/history outputs")
    run.add_argument("--config", help="flat key = value configuration file")
    run.add_argument("--problem", choices=("cd", "transport", "transport_jump", "synthetic_saddle"))
    run.add_argument("--epsilon", type=float)
    run.add_argument("--omega", type=float)
    run.add_argument("--trial-level", dest="trial_level", type=int)
    run.add_argument("--test-level", dest="test_level", type=int)
    run.add_argument("--samples", dest="sample_count", type=int)
    run.add_argument("--interval", dest="parameter_interval", type=float, nargs=2, metavar=("LO", "HI"))
    run.add_argument("--zeta", type=float)
    run.add_argument("--delta", type=float)
    run.add_argument("--tol", type=float)
    run.add_argument("--n-max", dest="n_max", type=int)
    run.add_argument("--cycles", type=int)
    run.add_argument("--out", dest="output_dir")
    run.add_argument("--seed", type=int)

    sub.add_parser("verify", help="run the built-in invariant suite")
    return parser


def _run(args):
    keys = (
        "problem", "epsilon", "omega", "trial_level", "test_level", "sample_count",
        "parameter_interval", "zeta", "delta", "tol", "n_max", "cycles",
        "output_dir", "seed",
    )
    overrides = {k: getattr(args, k, None) for k in keys}
    if overrides.get("parameter_interval") is not None:
        overrides["parameter_interval"] = tuple(overrides["parameter_interval"])
    cfg = parse_config(path=args.config, overrides=overrides)
    result = run_experiment(cfg)
    paths = emit_outputs(result, cfg.output_dir)
    for rec in result.histories[-1].records:
        print(
            f"n={rec.n:3d}  m={rec.m:3d}  stab={rec.stab_value:9.3e}  "
            f"max_surrogate={rec.max_surrogate:9.3e}"
        )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _verify_checks():
    from . import fem_grid as fg
    from .la_core import cholesky_spd, min_singular
    from .parametric_problem import ParameterDomain, build_transport_problem, cover_pieces
    from .greedy_driver import TruthSnapshots
    from .reduced import ReducedPair
    from .saddle_solver import solve_reduced, solve_truth
    from .stabilization import StabConfig, delta_rayleigh, inf_sup_constant, update_delta

    rng = np.random.default_rng(0)

    def chk_factor():
        A = rng.standard_normal((6, 6))
        A = A.T @ A + 6 * np.eye(6)
        L = cholesky_spd(A).factor
        return np.linalg.norm(L.T @ L - A) <= 1e-10 * np.linalg.norm(A)

    def chk_min_singular():
        D = rng.standard_normal((5, 3))
        t = min_singular(D)
        return abs(t.sigma_min ** 2 - np.linalg.eigvalsh(D.T @ D)[0]) < 1e-10

    def chk_partition():
        sp_ = fg.build_space(2, "continuous")
        return abs(fg.assemble(sp_, sp_, fg.MASS).sum() - 1.0) < 1e-12

    def chk_stiff_const():
        sp_ = fg.build_space(2, "continuous")
        K = fg.assemble(sp_, sp_, fg.STIFF)
        return np.abs(K @ np.ones(sp_.n_free)).max() < 1e-12

    dom = ParameterDomain(interval=(0.2, math.pi / 2), sample_count=12)
    piece = cover_pieces(dom)[0]
    problem = build_transport_problem(2, 3, piece)
    S = dom.samples

    def chk_riesz():
        w = rng.standard_normal(problem.n_test)
        x = problem.riesz_solve(0.7, w)
        return np.linalg.norm(problem.riesz_matrix(0.7) @ x - w) <= 1e-10 * np.linalg.norm(w)

    def chk_saddle():
        sol = solve_truth(problem, 0.7)
        return sol.residual_norm <= 1e-10

    snapshots = TruthSnapshots(problem, S)

    def chk_duality_and_snapshots():
        pair = ReducedPair(problem)
        for mu in S[::4]:
            pair.append_trial(snapshots.solution(mu).p)
        update_delta(problem, pair, StabConfig(), S)
        worst = 0.0
        for mu in S:
            s, _ = inf_sup_constant(problem, mu, pair)
            d2, _ = delta_rayleigh(problem, mu, pair)
            worst = max(worst, abs(s ** 2 + d2 - 1.0))
        if worst > 1e-8:
            return False
        mu = float(S[4])
        ell, g = snapshots.data(mu)
        sol = solve_reduced(problem, mu, pair, data=ell, boundary_data=g)
        err = problem.l2_distance(pair.lift_trial(sol.p), snapshots.solution(mu).p)
        return err < 1e-8

    return [
        ("factor-roundtrip", chk_factor),
        ("min-singular-oracle", chk_min_singular),
        ("mass-partition-of-unity", chk_partition),
        ("stiffness-kills-constants", chk_stiff_const),
        ("riesz-solve-roundtrip", chk_riesz),
        ("truth-saddle-residual", chk_saddle),
        ("graph-duality-and-snapshot-reproduction", chk_duality_and_snapshots),
    ]


def _verify():
    failures = 0
    for name, check in _verify_checks():
        try:
            ok = check()
        except Exception as exc:  # surface the failure, keep going
            ok = False
            print(f"FAIL {name}: {exc}")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 3


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        return _verify()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DgreedyError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
