"""Tabular episodic fixed-horizon MDPs, deterministic policies and exact evaluation.

Storage is 0-based throughout: states ``0..S-1``, actions ``0..A-1``, stages
``0..H-1``. Array layouts:

* transitions ``P[s, a, s']``
* mean rewards and reward noise ``R[s, a]``
* policies ``pi[s, h]`` (integer action)
* Q-values ``q[s, a, h]`` and state values ``v[s, h]``

The value after the last stage is taken to be zero.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .errors import InvalidDistribution, InvalidShape

SIMPLEX_TOL = 1e-9


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class TabularMdp:
    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray
    transitions: np.ndarray
    mean_reward: np.ndarray
    reward_noise: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        S, A, H = self.num_states, self.num_actions, self.horizon
        for name, n in (("num_states", S), ("num_actions", A), ("horizon", H)):
            if int(n) != n or n < 1:
                raise InvalidShape(f"{name} must be a positive integer, got {n!r}")
        noise = self.reward_noise
        if noise is None:
            noise = np.ones((S, A))
        object.__setattr__(self, "initial_dist", _readonly(self.initial_dist))
        object.__setattr__(self, "transitions", _readonly(self.transitions))
        object.__setattr__(self, "mean_reward", _readonly(self.mean_reward))
        object.__setattr__(self, "reward_noise", _readonly(np.broadcast_to(noise, (S, A)) if np.ndim(noise) == 0 else noise))
        _check(self)

    @property
    def S(self) -> int:
        return self.num_states

    @property
    def A(self) -> int:
        return self.num_actions

    @property
    def H(self) -> int:
        return self.horizon

    @cached_property
    def _cum_transitions(self) -> np.ndarray:
        return np.cumsum(self.transitions, axis=-1)

    @cached_property
    def _cum_initial(self) -> np.ndarray:
        return np.cumsum(self.initial_dist)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            (self.S, self.A, self.H) == (other.S, other.A, other.H)
            and np.array_equal(self.initial_dist, other.initial_dist)
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.mean_reward, other.mean_reward)
            and np.array_equal(self.reward_noise, other.reward_noise)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "A": self.A,
            "H": self.H,
            "rho": self.initial_dist.tolist(),
            "P": self.transitions.tolist(),
            "R": self.mean_reward.tolist(),
            "noise": self.reward_noise.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TabularMdp":
        missing = {"S", "A", "H", "rho", "P", "R"} - set(d)
        if missing:
            raise InvalidShape(f"MDP description missing keys: {sorted(missing)}")
        return cls(
            num_states=d["S"],
            num_actions=d["A"],
            horizon=d["H"],
            initial_dist=np.asarray(d["rho"], dtype=float),
            transitions=np.asarray(d["P"], dtype=float),
            mean_reward=np.asarray(d["R"], dtype=float),
            reward_noise=np.asarray(d.get("noise", 1.0), dtype=float),
        )


def _check(mdp: TabularMdp) -> None:
    S, A = mdp.S, mdp.A
    expected = {
        "initial_dist": (S,),
        "transitions": (S, A, S),
        "mean_reward": (S, A),
        "reward_noise": (S, A),
    }
    for name, shape in expected.items():
        got = getattr(mdp, name).shape
        if got != shape:
            raise InvalidShape(f"{name} has shape {got}, expected {shape}")
    rho, P = mdp.initial_dist, mdp.transitions
    if not np.all(np.isfinite(rho)) or np.any(rho < 0) or abs(rho.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidDistribution("initial distribution is not a probability vector")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise InvalidDistribution("transition probabilities must be finite and non-negative")
    bad = np.argwhere(np.abs(P.sum(axis=-1) - 1.0) > SIMPLEX_TOL)
    if len(bad):
        s, a = bad[0]
        raise InvalidDistribution(f"transition row (s={s}, a={a}) sums to {P[s, a].sum()!r}")
    if not np.all(np.isfinite(mdp.mean_reward)):
        raise InvalidShape("mean rewards must be finite")
    if not np.all(np.isfinite(mdp.reward_noise)) or np.any(mdp.reward_noise < 0):
        raise InvalidShape("reward noise must be finite and non-negative")


def validate_mdp(raw: TabularMdp | Mapping[str, Any]) -> TabularMdp:
    """Return ``raw`` as a checked :class:`TabularMdp`.

    Accepts an existing instance (re-checked and returned unchanged) or a
    mapping in the JSON layout used by :func:`load_mdp`.
    """
    if isinstance(raw, TabularMdp):
        _check(raw)
        return raw
    return TabularMdp.from_dict(raw)


def load_mdp(path: str | Path) -> TabularMdp:
    with open(path) as fh:
        return TabularMdp.from_dict(json.load(fh))


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp.to_dict(), fh)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


def as_policy(policy: Any, mdp: TabularMdp | None = None, *, shape: tuple[int, int] | None = None,
              num_actions: int | None = None) -> np.ndarray:
    """Coerce ``policy`` to an ``(S, H)`` integer array and check its entries."""
    pi = np.asarray(policy)
    if pi.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(pi, 1), 0)):
            raise InvalidShape("policy entries must be integers")
        pi = pi.astype(np.int64)
    if mdp is not None:
        shape, num_actions = (mdp.S, mdp.H), mdp.A
    if shape is not None and pi.shape != tuple(shape):
        raise InvalidShape(f"policy has shape {pi.shape}, expected {tuple(shape)}")
    if num_actions is not None and (np.any(pi < 0) or np.any(pi >= num_actions)):
        raise InvalidShape("policy contains an invalid action index")
    return pi


def policy_key(policy: np.ndarray) -> tuple[tuple[int, ...], ...]:
    """Hashable form of a policy."""
    return tuple(tuple(int(a) for a in row) for row in np.asarray(policy))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ValueTable:
    q: np.ndarray  # (S, A, H)
    v: np.ndarray  # (S, H)


def evaluate_policy(mdp: TabularMdp, policy: Any) -> ValueTable:
    pi = as_policy(policy, mdp)
    S, H = mdp.S, mdp.H
    q = np.empty((S, mdp.A, H))
    v = np.empty((S, H))
    v_next = np.zeros(S)
    states = np.arange(S)
    for h in range(H - 1, -1, -1):
        q[:, :, h] = mdp.mean_reward + mdp.transitions @ v_next
        v[:, h] = q[states, pi[:, h], h]
        v_next = v[:, h]
    q.setflags(write=False)
    v.setflags(write=False)
    return ValueTable(q=q, v=v)


def mean_episodic_reward(mdp: TabularMdp, policy: Any) -> float:
    """Expected total reward of one episode, starting from the initial distribution."""
    return float(mdp.initial_dist @ evaluate_policy(mdp, policy).v[:, 0])


def batch_policy_values(mdp: TabularMdp, policies: np.ndarray) -> np.ndarray:
    """State values ``(n, S, H)`` of a stack of ``(n, S, H)`` policies."""
    pols = np.asarray(policies)
    n = pols.shape[0]
    S, H = mdp.S, mdp.H
    out = np.empty((n, S, H))
    v = np.zeros((n, S))
    rows = np.arange(n)[:, None]
    states = np.arange(S)[None, :]
    for h in range(H - 1, -1, -1):
        q = mdp.mean_reward[None, :, :] + np.einsum("sat,nt->nsa", mdp.transitions, v)
        v = q[rows, states, pols[:, :, h]]
        out[:, :, h] = v
    return out


def mean_episodic_rewards(mdp: TabularMdp, policies: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mean_episodic_reward` over a stack of ``(n, S, H)`` policies."""
    return batch_policy_values(mdp, policies)[:, :, 0] @ mdp.initial_dist


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode: ``states`` has H+1 entries, ``actions``/``rewards`` H each."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    episode: int = 0

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[tuple[int, int, float, int]]:
        for h in range(len(self.actions)):
            yield int(self.states[h]), int(self.actions[h]), float(self.rewards[h]), int(self.states[h + 1])

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    @classmethod
    def from_steps(cls, steps, episode: int = 0) -> "Trajectory":
        """Build from consecutive ``(s, a, r, s')`` steps; each ``s'`` must be the next ``s``."""
        steps = list(steps)
        for (_, _, _, nxt), (cur, _, _, _) in zip(steps, steps[1:]):
            if nxt != cur:
                raise ValueError("steps do not form a single path")
        states = [s for s, _, _, _ in steps] + ([steps[-1][3]] if steps else [])
        return cls(
            states=np.asarray(states, dtype=np.int64),
            actions=np.asarray([a for _, a, _, _ in steps], dtype=np.int64),
            rewards=np.asarray([r for _, _, r, _ in steps], dtype=float),
            episode=episode,
        )


def _draw(cum: np.ndarray, u: float) -> int:
    i = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(i, len(cum) - 1)


def simulate_episode(mdp: TabularMdp, policy: Any, rng: np.random.Generator, episode: int = 0) -> Trajectory:
    pi = as_policy(policy, mdp)
    H = mdp.H
    u = rng.random(H + 1)
    eps = rng.standard_normal(H)
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    cum_p = mdp._cum_transitions
    s = _draw(mdp._cum_initial, u[0])
    for h in range(H):
        a = int(pi[s, h])
        states[h] = s
        actions[h] = a
        rewards[h] = mdp.mean_reward[s, a] + mdp.reward_noise[s, a] * eps[h]
        s = _draw(cum_p[s, a], u[h + 1])
    states[H] = s
    return Trajectory(states=states, actions=actions, rewards=rewards, episode=episode)
