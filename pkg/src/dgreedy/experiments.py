"""Experiment configuration, orchestration, and output emission.

Runs the double greedy per cover piece for the configured model problem,
evaluates the error columns against truth snapshots over the sample set,
and writes table.csv / history.json / decay.csv together with the decay
and per-parameter figures.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fem_grid import DiagonalJumpSource
from .greedy_driver import (
    GenericSaddleProblem,
    GreedyConfig,
    TruthSnapshots,
    dg1,
    dg2,
    iterative_tightening,
)
from .parametric_problem import (
    ParameterDomain,
    ThetaMap,
    build_cd_problem,
    build_transport_problem,
    cover_pieces,
)
from .stabilization import StabConfig

PROBLEMS = ("cd", "transport", "transport_jump", "synthetic_saddle")

TABLE_HEADER = (
    "piece",
    "trial_dim",
    "test_dim",
    "delta",
    "max_surrogate",
    "rb_truth",
    "rb_l2",
    "ratio",
)


def _fmt(x):
    """17 significant digits make serialization round trips exact."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    problem: str = "cd"
    epsilon: float = 2.0 ** -5
    omega: float = 1e-2
    trial_level: int = 5
    test_level: int = 6
    sample_count: int = 100
    parameter_interval: tuple = (0.2, math.pi - 0.2)
    zeta: float = 0.5
    delta: float = 0.5
    tol: float = 1e-6
    n_max: int = 12
    cycles: int = 0
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"must be one of {PROBLEMS}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon", "must be positive")
        if self.omega <= 0:
            raise ConfigError("omega", "must be positive")
        if self.test_level <= self.trial_level:
            raise ConfigError("test_level", "must exceed trial_level")
        if self.sample_count < 2:
            raise ConfigError("sample_count", "need at least two samples")
        lo, hi = self.parameter_interval
        if not (0.0 < lo <= hi < math.pi):
            raise ConfigError("parameter_interval", "must lie inside (0, pi)")
        if not 0.0 < self.zeta < 1.0:
            raise ConfigError("zeta", "must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta", "must lie in (0, 1)")
        if self.tol <= 0:
            raise ConfigError("tol", "must be positive")
        if self.n_max < 1:
            raise ConfigError("n_max", "must be at least 1")
        if self.cycles < 0:
            raise ConfigError("cycles", "must be nonnegative")

    def to_text(self):
        lines = [
            f'problem = "{self.problem}"',
            f"epsilon = {_fmt(self.epsilon)}",
            f"omega = {_fmt(self.omega)}",
            f"trial_level = {self.trial_level}",
            f"test_level = {self.test_level}",
            f"sample_count = {self.sample_count}",
            f"parameter_interval = [{_fmt(self.parameter_interval[0])}, {_fmt(self.parameter_interval[1])}]",
            f"zeta = {_fmt(self.zeta)}",
            f"delta = {_fmt(self.delta)}",
            f"tol = {_fmt(self.tol)}",
            f"n_max = {self.n_max}",
            f"cycles = {self.cycles}",
            f'output_dir = "{self.output_dir}"',
            f"seed = {self.seed}",
        ]
        return "\n".join(lines) + "\n"


_INT_KEYS = {"trial_level", "test_level", "sample_count", "n_max", "cycles", "seed"}
_FLOAT_KEYS = {"epsilon", "omega", "zeta", "delta", "tol"}


def _parse_value(key, raw):
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        parts = [p for p in raw[1:-1].split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    if raw.startswith('"') and raw.endswith('"'):
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'"):
        return raw[1:-1]
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config(path=None, text=None, overrides=None):
    """Build an ExperimentConfig from a flat key = value file plus overrides.

    The file format is a TOML-compatible subset: one assignment per line,
    ``#`` comments, quoted strings, and two-element float lists.
    """
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    if text is not None:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            values[key] = _parse_value(key, raw)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration key")
    if "parameter_interval" in values:
        iv = values["parameter_interval"]
        if not (isinstance(iv, tuple) and len(iv) == 2):
            raise ConfigError("parameter_interval", "expected [lo, hi]")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


@dataclass
class ReportTable:
    header: tuple = TABLE_HEADER
    rows: list = field(default_factory=list)

    def add_row(self, *values):
        if len(values) != len(self.header):
            raise ConfigError("table", "row width does not match the header")
        self.rows.append(tuple(values))

    def to_csv(self):
        lines = [",".join(self.header)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = tuple(lines[0].split(","))
        table = cls(header=header)
        for ln in lines[1:]:
            parts = ln.split(",")
            row = [int(parts[0]), int(parts[1]), int(parts[2])] + [
                float(p) for p in parts[3:]
            ]
            table.rows.append(tuple(row))
        return table


def make_synthetic_saddle(seed=0, m=30, n=20, rank=5, interval=(0.2, math.pi - 0.2)):
    """Dense affine saddle problem with a manufactured low-rank manifold.

    Data is built as f = A(mu) u*(mu) + B(mu) p*(mu), g = B(mu)^T u*(mu)
    for smooth rank-limited trajectories (u*, p*), so the truth solves
    reproduce them and the double greedy can certify to machine accuracy.
    """
    rng = np.random.default_rng(seed)
    A0 = rng.standard_normal((m, m))
    A0 = A0 @ A0.T + m * np.eye(m)
    A1 = rng.standard_normal((m, m))
    A1 = 0.5 * (A1 + A1.T)
    Bs = [rng.standard_normal((m, n)) for _ in range(3)]
    theta_a = ThetaMap((lambda mu: 1.0, lambda mu: 0.3 * math.sin(mu)))
    theta_b = ThetaMap(
        (lambda mu: 1.0, lambda mu: math.cos(mu), lambda mu: math.sin(mu))
    )
    Zs = rng.standard_normal((n, rank))
    Ys = rng.standard_normal((m, rank))

    def coeffs(mu, shift=0.0):
        return np.array(
            [math.sin((j + 1) * (mu + shift)) + 0.3 * math.cos(j * mu) for j in range(rank)]
        )

    def a_at(mu):
        return theta_a(mu)[0] * A0 + theta_a(mu)[1] * A1

    def b_at(mu):
        return sum(t * B for t, B in zip(theta_b(mu), Bs))

    def f(mu):
        return a_at(mu) @ (Ys @ coeffs(mu, 0.4)) + b_at(mu) @ (Zs @ coeffs(mu))

    def g(mu):
        return b_at(mu).T @ (Ys @ coeffs(mu, 0.4))

    samples = np.linspace(interval[0], interval[1], 40)
    return GenericSaddleProblem(
        [A0, A1],
        theta_a,
        Bs,
        theta_b,
        f=f,
        g=g,
        trial_gram=np.eye(n),
        interval=interval,
        samples_for_beta=samples[::5],
    )


def build_problem(cfg, piece):
    if cfg.problem == "cd":
        return build_cd_problem(
            cfg.epsilon, cfg.omega, cfg.trial_level, cfg.test_level, piece
        )
    if cfg.problem == "transport":
        return build_transport_problem(cfg.trial_level, cfg.test_level, piece)
    if cfg.problem == "transport_jump":
        g_b = lambda x, y: np.where(x <= 0.5, 1.0 - y, 0.0)
        return build_transport_problem(
            cfg.trial_level,
            cfg.test_level,
            piece,
            source=DiagonalJumpSource(below=1.0, above=0.5),
            inflow_data=g_b,
        )
    raise ConfigError("problem", f"no builder for {cfg.problem!r}")


def greedy_config(cfg, problem_kind):
    stab = StabConfig(zeta=cfg.zeta, delta=cfg.delta)
    surrogate = "truth_dual" if problem_kind == "cd" else "reduced_dual"
    return GreedyConfig(
        tol=cfg.tol,
        n_max=cfg.n_max,
        surrogate_kind=surrogate,
        stab=stab,
        tightening_cycles=cfg.cycles,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    table: ReportTable
    histories: list
    reports: list
    cycles: list = field(default_factory=list)


def run_experiment(cfg):
    """Run the configured experiment across all cover pieces."""
    if cfg.problem == "synthetic_saddle":
        return _run_synthetic(cfg)
    domain = ParameterDomain(
        interval=tuple(cfg.parameter_interval), sample_count=cfg.sample_count
    )
    pieces = cover_pieces(domain)
    table = ReportTable()
    histories, final_reports, cycles_all = [], [], []
    for piece in pieces:
        samples = domain.piece_samples(piece)
        if samples.size < 2:
            raise ConfigError("sample_count", f"piece {piece.index} has too few samples")
        problem = build_problem(cfg, piece)
        gcfg = greedy_config(cfg, problem.kind)
        snapshots = TruthSnapshots(problem, samples)
        if cfg.cycles > 0 and problem.kind == "transport":
            pair, cycles = iterative_tightening(problem, gcfg, samples, snapshots=snapshots)
            history = cycles[-1].history
            cycles_all.append(cycles)
        else:
            pair, history = dg1(problem, gcfg, samples, snapshots=snapshots)
            cycles_all.append([])
        histories.append(history)
        final_reports.append(history.reports[-1] if history.reports else None)
        max_bound = snapshots.max_truth_bound()
        for rec, rep in zip(history.records, history.reports):
            if problem.kind == "cd":
                ratio = rec.max_surrogate / max_bound if max_bound > 0 else float("nan")
                delta_col = float(np.sqrt(rep.delta2.max()))
            else:
                rbt = rep.rb_truth.max()
                ratio = rec.max_surrogate / rbt if rbt > 1e-14 else float("nan")
                delta_col = rec.stab_value
            table.add_row(
                piece.index,
                rec.n,
                rec.m,
                delta_col,
                rec.max_surrogate,
                float(rep.rb_truth.max()),
                float(rep.rb_l2.max()),
                ratio,
            )
    return ExperimentResult(
        config=cfg, table=table, histories=histories, reports=final_reports, cycles=cycles_all
    )


def _run_synthetic(cfg):
    problem = make_synthetic_saddle(seed=cfg.seed)
    samples = np.linspace(cfg.parameter_interval[0], cfg.parameter_interval[1], cfg.sample_count)
    gcfg = GreedyConfig(
        tol=cfg.tol,
        n_max=cfg.n_max,
        stab=StabConfig(zeta=cfg.zeta, delta=cfg.delta, norm_kind="native"),
        stab_update="inf_sup",
    )
    pair, history = dg2(problem, gcfg, samples)
    table = ReportTable()
    for rec in history.records:
        table.add_row(
            0, rec.n, rec.m, float("nan"), rec.max_surrogate,
            float("nan"), float("nan"), float("nan"),
        )
    return ExperimentResult(
        config=cfg, table=table, histories=[history], reports=[None], cycles=[[]]
    )


def _history_payload(history):
    return {
        "records": [
            {
                "n": r.n,
                "m": r.m,
                "stab_value": r.stab_value,
                "max_surrogate": r.max_surrogate,
                "argmax_mu": r.argmax_mu,
                "best_approx_error": r.best_approx_error,
                "wall_time": r.wall_time,
            }
            for r in history.records
        ],
        "selected_mu": list(history.selected),
        "stalled": history.stalled,
        "stall_message": history.stall_message,
    }


def emit_outputs(result, outdir):
    """Write table.csv, history.json, decay.csv and render the figures."""
    os.makedirs(outdir, exist_ok=True)
    table_path = os.path.join(outdir, "table.csv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(result.table.to_csv())

    decay_lines = ["piece,n,max_surrogate"]
    for piece_idx, history in enumerate(result.histories):
        for rec in history.records:
            decay_lines.append(f"{piece_idx},{rec.n},{_fmt(rec.max_surrogate)}")
    with open(os.path.join(outdir, "decay.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(decay_lines) + "\n")

    payload = {
        "config": json.loads(json.dumps(result.config.__dict__, default=list)),
        "pieces": [_history_payload(h) for h in result.histories],
    }
    with open(os.path.join(outdir, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _render_figures(result, outdir)
    return {
        "table": table_path,
        "decay": os.path.join(outdir, "decay.csv"),
        "history": os.path.join(outdir, "history.json"),
        "decay_plot": os.path.join(outdir, "decay.png"),
        "ratio_plot": os.path.join(outdir, "ratio.png"),
    }


def _render_figures(result, outdir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for piece_idx, history in enumerate(result.histories):
        ns = [r.n for r in history.records]
        surr = [r.max_surrogate for r in history.records]
        ax.semilogy(ns, surr, "o-", label=f"piece {piece_idx}")
    ax.set_xlabel("reduced basis trial dimension")
    ax.set_ylabel("max surrogate")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "decay.png"), dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    plotted = False
    for piece_idx, rep in enumerate(result.reports):
        if rep is None:
            continue
        ax.semilogy(rep.mu, rep.surrogate, "-", label=f"surrogate, piece {piece_idx}")
        ax.semilogy(rep.mu, rep.rb_truth, "--", label=f"rb-truth error, piece {piece_idx}")
        plotted = True
    if not plotted:
        ax.text(0.5, 0.5, "no per-parameter report", ha="center", va="center")
    ax.set_xlabel("transport angle")
    ax.set_ylabel("value")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "ratio.png"), dpi=150)
    plt.close(fig)
