"""Monte-Carlo estimates of simple regret and sub-optimal confidence mass.

The posterior confidence of a policy is the probability, under the belief, that
it is drawn uniformly from the optimal-policy set of a sampled MDP. Both the
simple regret and the total confidence of sub-optimal policies are expectations
over that mixture, so one uniform policy per sampled MDP gives unbiased,
sample-wise paired estimates of both.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateWindow, TooManyPolicies
from .mdp import TabularMdp, mean_episodic_rewards
from .planner import (
    DEFAULT_POLICY_LIMIT,
    DEFAULT_TIE_TOL,
    OptimalActionSets,
    backward_induction,
    batch_is_member,
    batch_optimal_masks,
    batch_sample_from_masks,
)
from .posterior import MdpBelief, sample_mdp_arrays

SANDWICH_SLACK = 1e-12
_CHUNK = 250


@dataclass
class MetricsRow:
    episode: int
    r_hat: float
    theta_hat: float
    n_samples: int
    fallback_count: int = 0
    cum_regret_expected: float = 0.0
    cum_regret_realized: float = 0.0
    confidences: dict | None = field(default=None, repr=False)


@dataclass(frozen=True)
class DecayFit:
    t_start: int
    t_end: int
    rate: float
    r_squared: float


def optimal_value(mdp: TabularMdp, sets: OptimalActionSets | None = None) -> float:
    """Best achievable mean episodic reward."""
    if sets is None:
        sets = backward_induction(mdp)
    return float(mdp.initial_dist @ sets.v[:, 0])


def policy_gaps(true_mdp: TabularMdp, true_sets: OptimalActionSets, policies: np.ndarray,
                mu_star: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-policy (gap, is_suboptimal); gaps of optimal policies are exactly 0."""
    if mu_star is None:
        mu_star = optimal_value(true_mdp, true_sets)
    optimal = batch_is_member(true_sets.mask, policies)
    gaps = np.where(optimal, 0.0, mu_star - mean_episodic_rewards(true_mdp, policies))
    return gaps, ~optimal


def sample_posterior_policies(belief: MdpBelief, n: int, rng: np.random.Generator,
                              tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """One uniform optimal policy for each of ``n`` posterior MDP samples, ``(n, S, H)``."""
    out = []
    for start in range(0, n, _CHUNK):
        k = min(_CHUNK, n - start)
        P, R = sample_mdp_arrays(belief, rng, k)
        mask, _ = batch_optimal_masks(P, R, belief.H, tie_tol)
        out.append(batch_sample_from_masks(mask, rng))
    return np.concatenate(out)


def estimate_simple_regret(belief: MdpBelief, true_mdp: TabularMdp, n_samples: int,
                           rng: np.random.Generator, tie_tol: float = DEFAULT_TIE_TOL, *,
                           episode: int = 0, true_sets: OptimalActionSets | None = None) -> MetricsRow:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if true_sets is None:
        true_sets = backward_induction(true_mdp, tie_tol)
    policies = sample_posterior_policies(belief, n_samples, rng, tie_tol)
    gaps, bad = policy_gaps(true_mdp, true_sets, policies)
    return MetricsRow(
        episode=episode,
        r_hat=float(gaps.mean()),
        theta_hat=float(bad.mean()),
        n_samples=n_samples,
    )


def estimate_confidences(belief: MdpBelief, n_samples: int, rng: np.random.Generator,
                         tie_tol: float = DEFAULT_TIE_TOL,
                         policy_limit: int = DEFAULT_POLICY_LIMIT) -> dict[tuple, Fraction]:
    """Exact-arithmetic confidence of every policy with non-zero estimated mass.

    Each sampled MDP spreads weight ``1/n`` evenly over its optimal policies.
    Policies are keyed by :func:`pspe.mdp.policy_key`; absent policies have 0.
    """
    S, A, H = belief.S, belief.A, belief.H
    if A ** (S * H) > policy_limit:
        raise TooManyPolicies(f"{A}^({S}*{H}) policies exceed the limit of {policy_limit}")
    alpha: dict[tuple, Fraction] = {}
    for start in range(0, n_samples, _CHUNK):
        k = min(_CHUNK, n_samples - start)
        P, R = sample_mdp_arrays(belief, rng, k)
        masks, _ = batch_optimal_masks(P, R, H, tie_tol)
        for mask in masks:
            coord_sets = [np.flatnonzero(mask[s, h]).tolist() for s in range(S) for h in range(H)]
            weight = Fraction(1, n_samples * math.prod(len(c) for c in coord_sets))
            for flat in itertools.product(*coord_sets):
                key = tuple(tuple(flat[s * H:(s + 1) * H]) for s in range(S))
                alpha[key] = alpha.get(key, Fraction(0)) + weight
    return alpha


def sandwich_check(row: MetricsRow, min_gap: float, max_gap: float, slack: float = SANDWICH_SLACK) -> bool:
    """Whether ``theta*min_gap <= r <= theta*max_gap`` holds for the row's estimates."""
    lower = row.theta_hat * min_gap - slack
    upper = row.theta_hat * max_gap + slack
    return lower <= row.r_hat <= upper


def cumulative_regret(true_mdp: TabularMdp, policy_sequence: Sequence | np.ndarray,
                      tie_tol: float = DEFAULT_TIE_TOL) -> np.ndarray:
    """Running sum of expected per-episode regret of the given policies."""
    pols = np.asarray(policy_sequence)
    if pols.size == 0:
        return np.zeros(0)
    sets = backward_induction(true_mdp, tie_tol)
    gaps, _ = policy_gaps(true_mdp, sets, pols)
    return np.cumsum(np.maximum(gaps, 0.0))


def fit_decay_rate(theta_series: Iterable[tuple[float, float]], window: tuple[float, float]) -> DecayFit:
    """Least-squares exponential rate of ``theta(t)`` over ``t_start <= t <= t_end``.

    Non-positive values are dropped; fewer than three remaining points is an error.
    """
    t_start, t_end = window
    if not t_start < t_end:
        raise DegenerateWindow("window start must precede its end")
    pts = [(float(t), float(y)) for t, y in theta_series if t_start <= t <= t_end and y > 0]
    if len(pts) < 3:
        raise DegenerateWindow(f"only {len(pts)} positive points in window {window}")
    t = np.array([p[0] for p in pts])
    logy = np.log([p[1] for p in pts])
    ss_tot = float(((logy - logy.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return DecayFit(int(t_start), int(t_end), 0.0, 1.0)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    r2 = min(1.0, max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot))
    rate = -float(slope)
    return DecayFit(int(t_start), int(t_end), rate, r2)
