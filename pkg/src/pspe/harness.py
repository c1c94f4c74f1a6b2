"""Seeded multi-trial experiments written to CSV.

Every (agent, trial) cell gets its own generator, derived from the master seed
and a stable key for the cell, so the rows of one cell never depend on which
other cells are in the grid or how many worker processes run them.
"""
from __future__ import annotations

import csv
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .agents import AgentConfig, practice_then_evaluate, run_agent
from .envs import make_stochastic_chain
from .errors import InvalidConfig, ParseError
from .mdp import TabularMdp, load_mdp

METRICS_COLUMNS = [
    "run_id", "agent_kind", "beta", "trial", "episode", "simple_regret", "theta",
    "cum_regret_expected", "cum_regret_realized", "eval_samples", "fallback_count", "seed",
]
PRACTICE_COLUMNS = METRICS_COLUMNS + ["t_practice", "practice_end_simple_regret", "eval_cum_regret"]
DEFAULT_BETAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def default_agents() -> list[AgentConfig]:
    return [AgentConfig("PSPE", b) for b in DEFAULT_BETAS] + [AgentConfig("RANDOM", 0.0)]


@dataclass
class ExperimentConfig:
    env: str = "chain"
    chain_n: int = 10
    left_reward_mean: float = 0.001
    right_reward_mean: float = 1.0
    env_file: str | None = None
    agents: list[AgentConfig] = field(default_factory=default_agents)
    episodes: int = 1000
    trials: int = 50
    eval_samples: int = 1000
    metrics_every: int = 10
    master_seed: int = 0
    practice_grid: list[int] = field(default_factory=lambda: list(range(0, 1001, 10)))
    t_eval: int = 1000
    output: str = "results.csv"
    workers: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.env not in ("chain", "file"):
            raise InvalidConfig(f"env must be 'chain' or 'file', got {self.env!r}")
        if self.env == "file" and not self.env_file:
            raise InvalidConfig("env 'file' requires env_file")
        if self.env == "chain" and (not isinstance(self.chain_n, int) or self.chain_n < 2):
            raise InvalidConfig("chain_n must be an integer >= 2")
        for name in ("episodes", "trials", "eval_samples", "metrics_every", "t_eval", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2**64:
            raise InvalidConfig("master_seed must be an integer in [0, 2^64)")
        if not self.agents:
            raise InvalidConfig("agent grid is empty")
        if any(not isinstance(t, int) or t < 0 for t in self.practice_grid):
            raise InvalidConfig("practice_grid entries must be non-negative integers")

    def make_env(self) -> TabularMdp:
        if self.env == "file":
            return load_mdp(self.env_file)
        return make_stochastic_chain(self.chain_n, self.left_reward_mean, self.right_reward_mean)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["agents"] = [
            {"kind": a.kind, "beta": a.beta, "max_resamples": a.max_resamples,
             "max_rejections": a.max_rejections, "tie_tol": a.tie_tol}
            for a in self.agents
        ]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        kw = dict(raw)
        if "agents" in kw:
            try:
                kw["agents"] = [AgentConfig(**a) for a in kw["agents"]]
            except (TypeError, ValueError) as exc:
                raise InvalidConfig(f"bad agent entry: {exc}") from exc
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def _key(label: str) -> int:
    return zlib.crc32(label.encode())


def cell_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed for one experiment cell, mixed from the master seed and the cell keys."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


# ---------------------------------------------------------------------------
# Sweep (simple regret over time)
# ---------------------------------------------------------------------------


def _beta_of(agent: AgentConfig) -> float:
    if agent.kind == "PSRL":
        return 1.0
    if agent.kind == "RANDOM":
        return float("nan")
    return agent.beta


def _fmt_beta(agent: AgentConfig) -> str:
    return "" if agent.kind == "RANDOM" else repr(_beta_of(agent))


def _sweep_cell(args) -> list[dict]:
    mdp_dict, agent, trial, episodes, metrics_every, eval_samples, seed = args
    mdp = TabularMdp.from_dict(mdp_dict)
    schedule = range(metrics_every, episodes + 1, metrics_every)
    _, log = run_agent(mdp, agent, episodes, np.random.default_rng(seed), schedule, eval_samples=eval_samples)
    return [
        {
            "run_id": f"{agent.label}/trial{trial}",
            "agent_kind": agent.kind,
            "beta": _fmt_beta(agent),
            "trial": trial,
            "episode": row.episode,
            "simple_regret": repr(row.r_hat),
            "theta": repr(row.theta_hat),
            "cum_regret_expected": repr(row.cum_regret_expected),
            "cum_regret_realized": repr(row.cum_regret_realized),
            "eval_samples": row.n_samples,
            "fallback_count": row.fallback_count,
            "seed": seed,
        }
        for row in log.metrics
    ]


def _map(fn: Callable, cells: Sequence, workers: int) -> list:
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def _write_csv(path: Path, columns: list[str], rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(xs, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
    return float(a.mean()), se


def summary_path(out: str | Path, suffix: str = "summary") -> Path:
    out = Path(out)
    return out.with_name(f"{out.stem}.{suffix}{out.suffix or '.csv'}")


@dataclass
class SweepResult:
    rows: list[dict]
    summary: list[dict]
    path: Path
    summary_path: Path


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Run every (agent, trial) cell and write per-checkpoint rows plus a mean/SE summary."""
    cfg.validate()
    mdp_dict = cfg.make_env().to_dict()
    cells = [
        (mdp_dict, agent, trial, cfg.episodes, cfg.metrics_every, cfg.eval_samples,
         cell_seed(cfg.master_seed, _key(agent.label), trial))
        for agent in cfg.agents
        for trial in range(cfg.trials)
    ]
    rows = [r for cell_rows in _map(_sweep_cell, cells, cfg.workers) for r in cell_rows]

    summary = []
    for agent in cfg.agents:
        mine = [r for r in rows if r["run_id"].startswith(agent.label + "/")]
        for ep in sorted({r["episode"] for r in mine}):
            at = [r for r in mine if r["episode"] == ep]
            sr = _mean_se([float(r["simple_regret"]) for r in at])
            th = _mean_se([float(r["theta"]) for r in at])
            cr = _mean_se([float(r["cum_regret_expected"]) for r in at])
            summary.append({
                "agent_kind": agent.kind, "beta": _fmt_beta(agent), "episode": ep, "trials": len(at),
                "simple_regret_mean": repr(sr[0]), "simple_regret_se": repr(sr[1]),
                "theta_mean": repr(th[0]), "theta_se": repr(th[1]),
                "cum_regret_expected_mean": repr(cr[0]), "cum_regret_expected_se": repr(cr[1]),
            })

    out = Path(cfg.output)
    _write_csv(out, METRICS_COLUMNS, rows)
    spath = summary_path(out)
    _write_csv(spath, list(summary[0].keys()) if summary else ["agent_kind"], summary)
    return SweepResult(rows, summary, out, spath)


# ---------------------------------------------------------------------------
# Practice-then-evaluate study
# ---------------------------------------------------------------------------

PRACTICE_KEY = _key("practice")


def _practice_cell(args) -> dict:
    mdp_dict, agent, trial, t_practice, t_eval, eval_samples, seed = args
    mdp = TabularMdp.from_dict(mdp_dict)
    beta = _beta_of(agent)
    log = practice_then_evaluate(mdp, beta, t_practice, t_eval, np.random.default_rng(seed),
                                 eval_samples=eval_samples, max_resamples=agent.max_resamples,
                                 max_rejections=agent.max_rejections, tie_tol=agent.tie_tol)
    end = log.practice_end
    total = sum(log.mu_star - e.expected_value for e in log.episodes)
    realized = sum(log.mu_star - e.total_reward for e in log.episodes)
    return {
        "run_id": f"PSPE(beta={beta:g})/T{t_practice}/trial{trial}",
        "agent_kind": "PSPE",
        "beta": repr(beta),
        "trial": trial,
        "episode": end.episode,
        "simple_regret": repr(end.r_hat),
        "theta": repr(end.theta_hat),
        "cum_regret_expected": repr(float(total)),
        "cum_regret_realized": repr(float(realized)),
        "eval_samples": end.n_samples,
        "fallback_count": log.fallback_count,
        "seed": seed,
        "t_practice": t_practice,
        "practice_end_simple_regret": repr(end.r_hat),
        "eval_cum_regret": repr(log.eval_cum_regret),
    }


@dataclass
class PracticeResult:
    rows: list[dict]
    cells: list[dict]
    pearson: float
    spearman: float
    path: Path
    summary_path: Path
    correlation_path: Path


def practice_betas(cfg: ExperimentConfig) -> list[float]:
    """Distinct practice-phase betas in grid order; PSRL counts as beta=1, RANDOM is skipped."""
    out: list[float] = []
    for a in cfg.agents:
        if a.kind != "RANDOM" and _beta_of(a) not in out:
            out.append(_beta_of(a))
    return out


def run_practice_study(cfg: ExperimentConfig) -> PracticeResult:
    """Practice with PSPE(beta), evaluate with PSRL; correlate the two regrets across cells.

    Seeds depend on (practice length, trial) only, so all betas in a cell share
    their random streams and ``T_practice = 0`` rows agree across betas.
    """
    cfg.validate()
    if not cfg.practice_grid:
        raise InvalidConfig("practice_grid is empty")
    betas = practice_betas(cfg)
    if not betas:
        raise InvalidConfig("no PSPE/PSRL agents for the practice study")
    mdp_dict = cfg.make_env().to_dict()
    cells = [
        (mdp_dict, AgentConfig("PSPE", b), trial, t_p, cfg.t_eval, cfg.eval_samples,
         cell_seed(cfg.master_seed, PRACTICE_KEY, t_p, trial))
        for b in betas
        for t_p in cfg.practice_grid
        for trial in range(cfg.trials)
    ]
    rows = _map(_practice_cell, cells, cfg.workers)

    summary = []
    for b in betas:
        for t_p in cfg.practice_grid:
            at = [r for r in rows if float(r["beta"]) == b and r["t_practice"] == t_p]
            sr = _mean_se([float(r["practice_end_simple_regret"]) for r in at])
            cr = _mean_se([float(r["eval_cum_regret"]) for r in at])
            summary.append({
                "beta": repr(b), "t_practice": t_p, "trials": len(at),
                "practice_end_simple_regret_mean": repr(sr[0]), "practice_end_simple_regret_se": repr(sr[1]),
                "eval_cum_regret_mean": repr(cr[0]), "eval_cum_regret_se": repr(cr[1]),
            })
    x = [float(c["practice_end_simple_regret_mean"]) for c in summary]
    y = [float(c["eval_cum_regret_mean"]) for c in summary]
    if len(summary) >= 2 and np.ptp(x) > 0 and np.ptp(y) > 0:
        pearson = float(stats.pearsonr(x, y)[0])
        spearman = float(stats.spearmanr(x, y)[0])
    else:
        pearson = spearman = float("nan")

    out = Path(cfg.output)
    _write_csv(out, PRACTICE_COLUMNS, rows)
    spath = summary_path(out)
    _write_csv(spath, list(summary[0].keys()), summary)
    cpath = summary_path(out, "correlation").with_suffix(".json")
    cpath.write_text(json.dumps({"pearson": pearson, "spearman": spearman, "n_cells": len(summary)},
                                sort_keys=True) + "\n")
    return PracticeResult(rows, summary, pearson, spearman, out, spath, cpath)


def read_metrics_csv(path: str | Path) -> list[dict[str, Any]]:
    """Parse a metrics CSV back into typed dictionaries."""
    ints = {"trial", "episode", "eval_samples", "fallback_count", "seed", "t_practice"}
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            typed: dict[str, Any] = {}
            for k, v in r.items():
                if k in ints:
                    typed[k] = int(v)
                elif k in ("run_id", "agent_kind"):
                    typed[k] = v
                else:
                    typed[k] = float(v) if v != "" else None
            out.append(typed)
    return out
