"""Benchmark MDPs."""
from __future__ import annotations

import numpy as np

from .errors import InvalidShape
from .mdp import TabularMdp

LEFT, RIGHT = 0, 1


def make_stochastic_chain(N: int, left_reward_mean: float = 0.001, right_reward_mean: float = 1.0) -> TabularMdp:
    """Chain of ``N`` states with horizon ``N``, starting at the left end.

    Action ``LEFT`` moves one state left deterministically. ``RIGHT`` moves right
    with probability ``1 - 1/N`` and left otherwise. Moves past either end stay
    put. The only rewards are for LEFT at the first state and RIGHT at the last,
    each with unit-variance Gaussian noise.
    """
    if int(N) != N or N < 2:
        raise InvalidShape(f"chain length must be an integer >= 2, got {N!r}")
    N = int(N)
    P = np.zeros((N, 2, N))
    for s in range(N):
        P[s, LEFT, max(s - 1, 0)] = 1.0
        P[s, RIGHT, min(s + 1, N - 1)] += 1.0 - 1.0 / N
        P[s, RIGHT, max(s - 1, 0)] += 1.0 / N
    R = np.zeros((N, 2))
    noise = np.zeros((N, 2))
    R[0, LEFT] = left_reward_mean
    R[N - 1, RIGHT] = right_reward_mean
    noise[0, LEFT] = noise[N - 1, RIGHT] = 1.0
    rho = np.zeros(N)
    rho[0] = 1.0
    return TabularMdp(N, 2, N, rho, P, R, noise)


def always_right(N: int) -> np.ndarray:
    return np.full((N, N), RIGHT, dtype=np.int64)


def make_random_mdp(S: int, A: int, H: int, rng: np.random.Generator, reward_spread: float = 1.0,
                    reward_noise: float = 1.0) -> TabularMdp:
    P = rng.dirichlet(np.ones(S), size=(S, A))
    R = rng.uniform(-reward_spread, reward_spread, size=(S, A))
    return TabularMdp(S, A, H, np.full(S, 1.0 / S), P, R, np.full((S, A), float(reward_noise)))
