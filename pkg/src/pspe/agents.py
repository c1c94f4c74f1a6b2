"""Episode-level exploration strategies and the loop that runs them.

A run owns three independent random streams split off the caller's generator:
policy selection, environment simulation and metric estimation. Estimating
metrics therefore never perturbs the trajectory of a run, and PSPE with
``beta=1`` draws exactly the same numbers as PSRL.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mdp import TabularMdp, Trajectory, mean_episodic_rewards, simulate_episode
from .metrics import MetricsRow, estimate_simple_regret, optimal_value, policy_gaps
from .planner import (
    DEFAULT_MAX_REJECTIONS,
    DEFAULT_TIE_TOL,
    OptimalActionSets,
    backward_induction,
    batch_optimal_masks,
    batch_sample_from_masks,
    sample_policy_from_difference,
)
from .posterior import MdpBelief, belief_for, sample_mdp_arrays, update_belief

logger = logging.getLogger(__name__)

KINDS = ("PSRL", "PSPE", "RANDOM")
DEFAULT_MAX_RESAMPLES = 100


@dataclass(frozen=True)
class AgentConfig:
    kind: str = "PSPE"
    beta: float = 0.5
    max_resamples: int = DEFAULT_MAX_RESAMPLES
    max_rejections: int = DEFAULT_MAX_REJECTIONS
    tie_tol: float = DEFAULT_TIE_TOL

    def __post_init__(self) -> None:
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.max_resamples < 1 or self.max_rejections < 1:
            raise ValueError("resample and rejection caps must be at least 1")
        if self.tie_tol < 0:
            raise ValueError("tie_tol must be non-negative")

    @property
    def label(self) -> str:
        if self.kind == "PSPE":
            return f"PSPE(beta={self.beta:g})"
        return self.kind


@dataclass
class SelectStats:
    """Counters accumulated by the selection functions."""

    mdp_samples: int = 0
    fallbacks: int = 0


def _sets(mask: np.ndarray, tie_tol: float) -> OptimalActionSets:
    # value tables are not needed by the selection path
    return OptimalActionSets(mask=mask, q=np.empty(0), v=np.empty(0), tie_tol=tie_tol)


def _sample_sets(belief: MdpBelief, rng: np.random.Generator, n: int, tie_tol: float) -> np.ndarray:
    P, R = sample_mdp_arrays(belief, rng, n)
    mask, _ = batch_optimal_masks(P, R, belief.H, tie_tol)
    return mask


def psrl_select(belief: MdpBelief, rng: np.random.Generator, tie_tol: float = DEFAULT_TIE_TOL,
                stats: SelectStats | None = None) -> np.ndarray:
    mask = _sample_sets(belief, rng, 1, tie_tol)[0]
    if stats is not None:
        stats.mdp_samples += 1
    return batch_sample_from_masks(mask, rng)


def pspe_select(belief: MdpBelief, cfg: AgentConfig, rng: np.random.Generator,
                stats: SelectStats | None = None) -> np.ndarray:
    base = _sample_sets(belief, rng, 1, cfg.tie_tol)[0]
    if stats is not None:
        stats.mdp_samples += 1
    # beta in {0, 1} is decided without consuming randomness
    if cfg.beta >= 1.0:
        follow = True
    elif cfg.beta <= 0.0:
        follow = False
    else:
        follow = bool(rng.random() < cfg.beta)
    if follow:
        return batch_sample_from_masks(base, rng)

    used = 0
    chunk = 1
    while used < cfg.max_resamples:
        k = min(chunk, cfg.max_resamples - used)
        masks = _sample_sets(belief, rng, k, cfg.tie_tol)
        differs = np.any(masks & ~base, axis=(1, 2, 3))
        if differs.any():
            i = int(np.argmax(differs))
            if stats is not None:
                stats.mdp_samples += used + i + 1
            return sample_policy_from_difference(
                _sets(masks[i], cfg.tie_tol), _sets(base, cfg.tie_tol), rng, cfg.max_rejections
            )
        used += k
        chunk *= 2

    if stats is not None:
        stats.mdp_samples += used
        stats.fallbacks += 1
    logger.debug("PSPE resampling exhausted after %d draws; following the first sample", used)
    return batch_sample_from_masks(base, rng)


def random_select(S: int, A: int, H: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(A, size=(S, H))


def select_policy(belief: MdpBelief, cfg: AgentConfig, rng: np.random.Generator,
                  stats: SelectStats | None = None) -> np.ndarray:
    if cfg.kind == "PSRL":
        return psrl_select(belief, rng, cfg.tie_tol, stats)
    if cfg.kind == "PSPE":
        return pspe_select(belief, cfg, rng, stats)
    return random_select(belief.S, belief.A, belief.H, rng)


# ---------------------------------------------------------------------------
# Running agents
# ---------------------------------------------------------------------------


@dataclass
class EpisodeRecord:
    episode: int
    policy: np.ndarray
    total_reward: float
    expected_value: float
    trajectory: Trajectory | None = field(default=None, repr=False)


@dataclass
class RunLog:
    mu_star: float
    episodes: list[EpisodeRecord] = field(default_factory=list)
    metrics: list[MetricsRow] = field(default_factory=list)
    fallback_count: int = 0
    mdp_samples: int = 0
    practice_end: MetricsRow | None = None
    eval_cum_regret: float | None = None

    def policies(self) -> np.ndarray:
        return np.array([e.policy for e in self.episodes])

    def to_json(self) -> str:
        """Canonical serialisation; equal logs give equal strings."""
        d = {
            "mu_star": self.mu_star,
            "episodes": [
                {"episode": e.episode, "policy": np.asarray(e.policy).tolist(),
                 "total_reward": e.total_reward, "expected_value": e.expected_value,
                 "states": None if e.trajectory is None else e.trajectory.states.tolist(),
                 "rewards": None if e.trajectory is None else e.trajectory.rewards.tolist()}
                for e in self.episodes
            ],
            "metrics": [{k: v for k, v in asdict(m).items() if k != "confidences"} for m in self.metrics],
            "fallback_count": self.fallback_count,
            "mdp_samples": self.mdp_samples,
            "practice_end": None if self.practice_end is None else
            {k: v for k, v in asdict(self.practice_end).items() if k != "confidences"},
            "eval_cum_regret": self.eval_cum_regret,
        }
        return json.dumps(d, sort_keys=True)


class _Run:
    """Mutable state of one run: belief, random streams and the log."""

    def __init__(self, true_mdp: TabularMdp, rng: np.random.Generator, belief: MdpBelief | None,
                 eval_samples: int, tie_tol: float):
        self.true_mdp = true_mdp
        self.select_rng, self.env_rng, self.eval_rng = rng.spawn(3)
        self.belief = belief if belief is not None else belief_for(true_mdp)
        self.true_sets = backward_induction(true_mdp, tie_tol)
        self.mu_star = optimal_value(true_mdp, self.true_sets)
        self.eval_samples = eval_samples
        self.tie_tol = tie_tol
        self.stats = SelectStats()
        self.log = RunLog(mu_star=self.mu_star)
        self.t = 0
        self.cum_expected = 0.0
        self.cum_realized = 0.0

    def step(self, cfg: AgentConfig) -> Trajectory:
        self.t += 1
        policy = select_policy(self.belief, cfg, self.select_rng, self.stats)
        traj = simulate_episode(self.true_mdp, policy, self.env_rng, episode=self.t)
        self.belief = update_belief(self.belief, traj)
        gap, _ = policy_gaps(self.true_mdp, self.true_sets, policy[None], self.mu_star)
        value = self.mu_star - float(gap[0])
        self.cum_expected += float(gap[0])
        self.cum_realized += self.mu_star - traj.total_reward
        self.log.episodes.append(EpisodeRecord(self.t, policy, traj.total_reward, value, traj))
        self.log.fallback_count = self.stats.fallbacks
        self.log.mdp_samples = self.stats.mdp_samples
        return traj

    def measure(self) -> MetricsRow:
        row = estimate_simple_regret(self.belief, self.true_mdp, self.eval_samples, self.eval_rng,
                                     self.tie_tol, episode=self.t, true_sets=self.true_sets)
        row.fallback_count = self.stats.fallbacks
        row.cum_regret_expected = self.cum_expected
        row.cum_regret_realized = self.cum_realized
        return row


def run_agent(true_mdp: TabularMdp, cfg: AgentConfig, num_episodes: int, rng: np.random.Generator,
              metrics_schedule: Iterable[int] = (), *, belief: MdpBelief | None = None,
              eval_samples: int = 1000) -> tuple[MdpBelief, RunLog]:
    """Run ``cfg`` on ``true_mdp`` for ``num_episodes`` episodes.

    Metrics are estimated after every episode listed in ``metrics_schedule``
    (``0`` means before the first episode) and appended to the log.
    """
    run = _Run(true_mdp, rng, belief, eval_samples, cfg.tie_tol)
    schedule = set(int(t) for t in metrics_schedule)
    if 0 in schedule:
        run.log.metrics.append(run.measure())
    for _ in range(num_episodes):
        run.step(cfg)
        if run.t in schedule:
            run.log.metrics.append(run.measure())
    return run.belief, run.log


def practice_then_evaluate(true_mdp: TabularMdp, beta: float, T_practice: int, T_eval: int,
                           rng: np.random.Generator, *, eval_samples: int = 1000,
                           metrics_schedule: Iterable[int] = (), max_resamples: int = DEFAULT_MAX_RESAMPLES,
                           max_rejections: int = DEFAULT_MAX_REJECTIONS,
                           tie_tol: float = DEFAULT_TIE_TOL) -> RunLog:
    """PSPE(beta) for ``T_practice`` episodes, then PSRL on the same belief for ``T_eval``.

    ``log.practice_end`` holds the simple-regret estimate at the switch and
    ``log.eval_cum_regret`` the expected regret summed over evaluation episodes only.
    """
    if T_practice < 0 or T_eval < 1:
        raise ValueError("need T_practice >= 0 and T_eval >= 1")
    practice = AgentConfig("PSPE", beta, max_resamples, max_rejections, tie_tol)
    evaluation = AgentConfig("PSRL", 1.0, max_resamples, max_rejections, tie_tol)
    run = _Run(true_mdp, rng, None, eval_samples, tie_tol)
    schedule = set(int(t) for t in metrics_schedule)
    if 0 in schedule:
        run.log.metrics.append(run.measure())
    for _ in range(T_practice):
        run.step(practice)
        if run.t in schedule:
            run.log.metrics.append(run.measure())
    run.log.practice_end = run.measure()
    regret_at_switch = run.cum_expected
    for _ in range(T_eval):
        run.step(evaluation)
        if run.t in schedule:
            run.log.metrics.append(run.measure())
    run.log.eval_cum_regret = run.cum_expected - regret_at_switch
    return run.log


def replay_belief(belief: MdpBelief, trajectories: Sequence[Trajectory]) -> MdpBelief:
    for traj in trajectories:
        belief = update_belief(belief, traj)
    return belief
