"""Conjugate belief over tabular MDPs.

Transitions: an independent Dirichlet per (s, a) with categorical likelihood.
Mean rewards: an independent Normal per (s, a) with a Normal likelihood of known
variance. The initial-state distribution is known and copied through.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import IndexOutOfRange, InvalidShape
from .mdp import TabularMdp, Trajectory


@dataclass(frozen=True)
class PriorConfig:
    concentration: float = 1.0
    reward_mean: float = 0.0
    reward_variance: float = 1.0
    likelihood_variance: float = 1.0

    def __post_init__(self) -> None:
        if self.concentration <= 0:
            raise ValueError("Dirichlet concentration must be positive")
        if self.reward_variance <= 0 or self.likelihood_variance <= 0:
            raise ValueError("variances must be positive")


@dataclass(frozen=True, eq=False)
class MdpBelief:
    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray
    concentration: np.ndarray  # (S, A, S) Dirichlet parameters, prior included
    reward_count: np.ndarray  # (S, A) int
    reward_sum: np.ndarray  # (S, A)
    prior: PriorConfig = field(default_factory=PriorConfig)

    @property
    def S(self) -> int:
        return self.num_states

    @property
    def A(self) -> int:
        return self.num_actions

    @property
    def H(self) -> int:
        return self.horizon

    def reward_posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances of every mean reward, each ``(S, A)``."""
        p = self.prior
        precision = 1.0 / p.reward_variance + self.reward_count / p.likelihood_variance
        var = 1.0 / precision
        mean = var * (p.reward_mean / p.reward_variance + self.reward_sum / p.likelihood_variance)
        return mean, var

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MdpBelief):
            return NotImplemented
        return (
            (self.S, self.A, self.H, self.prior) == (other.S, other.A, other.H, other.prior)
            and np.array_equal(self.initial_dist, other.initial_dist)
            and np.array_equal(self.concentration, other.concentration)
            and np.array_equal(self.reward_count, other.reward_count)
            and np.array_equal(self.reward_sum, other.reward_sum)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "A": self.A,
            "H": self.H,
            "rho": self.initial_dist.tolist(),
            "concentration": self.concentration.tolist(),
            "reward_count": self.reward_count.tolist(),
            "reward_sum": self.reward_sum.tolist(),
            "prior": {
                "concentration": self.prior.concentration,
                "reward_mean": self.prior.reward_mean,
                "reward_variance": self.prior.reward_variance,
                "likelihood_variance": self.prior.likelihood_variance,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdpBelief":
        b = cls(
            num_states=int(d["S"]),
            num_actions=int(d["A"]),
            horizon=int(d["H"]),
            initial_dist=_frozen(d["rho"]),
            concentration=_frozen(d["concentration"]),
            reward_count=_frozen(d["reward_count"], dtype=np.int64),
            reward_sum=_frozen(d["reward_sum"]),
            prior=PriorConfig(**d.get("prior", {})),
        )
        _check_shapes(b)
        return b


def _frozen(x, dtype=float) -> np.ndarray:
    x = np.array(x, dtype=dtype, copy=True)
    x.setflags(write=False)
    return x


def _check_shapes(b: MdpBelief) -> None:
    S, A = b.S, b.A
    if b.initial_dist.shape != (S,) or b.concentration.shape != (S, A, S):
        raise InvalidShape("belief arrays do not match its dimensions")
    if b.reward_count.shape != (S, A) or b.reward_sum.shape != (S, A):
        raise InvalidShape("belief arrays do not match its dimensions")


def save_belief(belief: MdpBelief, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(belief.to_dict(), fh)


def load_belief(path: str | Path) -> MdpBelief:
    with open(path) as fh:
        return MdpBelief.from_dict(json.load(fh))


def init_belief(S: int, A: int, H: int, rho, prior_cfg: PriorConfig | None = None) -> MdpBelief:
    for name, n in (("S", S), ("A", A), ("H", H)):
        if int(n) != n or n < 1:
            raise InvalidShape(f"{name} must be a positive integer, got {n!r}")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (S,):
        raise InvalidShape(f"initial distribution has shape {rho.shape}, expected ({S},)")
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-9:
        raise InvalidShape("initial distribution is not a probability vector")
    prior = prior_cfg or PriorConfig()
    return MdpBelief(
        num_states=S,
        num_actions=A,
        horizon=H,
        initial_dist=_frozen(rho),
        concentration=_frozen(np.full((S, A, S), prior.concentration)),
        reward_count=_frozen(np.zeros((S, A)), dtype=np.int64),
        reward_sum=_frozen(np.zeros((S, A))),
        prior=prior,
    )


def belief_for(mdp: TabularMdp, prior_cfg: PriorConfig | None = None) -> MdpBelief:
    """Prior belief with the dimensions and initial distribution of ``mdp``."""
    return init_belief(mdp.S, mdp.A, mdp.H, mdp.initial_dist, prior_cfg)


def update_belief(belief: MdpBelief, traj: Trajectory | Iterable[tuple[int, int, float, int]]) -> MdpBelief:
    """Return the posterior after observing every step of ``traj``.

    ``traj`` is a :class:`Trajectory` or any iterable of
    ``(state, action, reward, next_state)`` tuples.
    """
    if isinstance(traj, Trajectory):
        s, a, r, s_next = traj.states[:-1], traj.actions, traj.rewards, traj.states[1:]
    else:
        steps = list(traj)
        s = np.array([x[0] for x in steps], dtype=np.int64)
        a = np.array([x[1] for x in steps], dtype=np.int64)
        r = np.array([x[2] for x in steps], dtype=float)
        s_next = np.array([x[3] for x in steps], dtype=np.int64)
    if len(a) == 0:
        return belief
    S, A = belief.S, belief.A
    if (np.any((s < 0) | (s >= S)) or np.any((s_next < 0) | (s_next >= S))
            or np.any((a < 0) | (a >= A))):
        raise IndexOutOfRange("trajectory refers to a state or action outside the belief")
    conc = belief.concentration.copy()
    np.add.at(conc, (s, a, s_next), 1.0)
    count = belief.reward_count.copy()
    np.add.at(count, (s, a), 1)
    total = belief.reward_sum.copy()
    np.add.at(total, (s, a), r)
    for x in (conc, count, total):
        x.setflags(write=False)
    return replace(belief, concentration=conc, reward_count=count, reward_sum=total)


def sample_mdp_arrays(belief: MdpBelief, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` MDPs; returns transitions ``(n, S, A, S)`` and mean rewards ``(n, S, A)``."""
    S, A = belief.S, belief.A
    g = rng.standard_gamma(np.broadcast_to(belief.concentration, (n, S, A, S)))
    P = g / g.sum(axis=-1, keepdims=True)
    mean, var = belief.reward_posterior()
    R = mean + np.sqrt(var) * rng.standard_normal((n, S, A))
    return P, R


def sample_mdp(belief: MdpBelief, rng: np.random.Generator) -> TabularMdp:
    P, R = sample_mdp_arrays(belief, rng, 1)
    return TabularMdp(
        num_states=belief.S,
        num_actions=belief.A,
        horizon=belief.H,
        initial_dist=belief.initial_dist,
        transitions=P[0],
        mean_reward=R[0],
        reward_noise=np.full((belief.S, belief.A), np.sqrt(belief.prior.likelihood_variance)),
    )


def posterior_marginals(belief: MdpBelief, s: int, a: int) -> tuple[np.ndarray, float, float]:
    """Dirichlet parameters of P(.|s,a) and the Normal posterior of the mean reward at (s, a)."""
    if not (0 <= s < belief.S and 0 <= a < belief.A):
        raise IndexOutOfRange(f"(s={s}, a={a}) outside a {belief.S}x{belief.A} belief")
    mean, var = belief.reward_posterior()
    return belief.concentration[s, a].copy(), float(mean[s, a]), float(var[s, a])
