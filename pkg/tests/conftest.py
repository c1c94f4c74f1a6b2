import numpy as np
import pytest

from pspe.envs import make_stochastic_chain
from pspe.mdp import TabularMdp


def point_mass(S, s=0):
    rho = np.zeros(S)
    rho[s] = 1.0
    return rho


def bandit(means, noise=1.0):
    """Single-state, single-stage MDP: one arm per action."""
    A = len(means)
    return TabularMdp(1, A, 1, [1.0], np.ones((1, A, 1)), np.array([means], dtype=float),
                      np.full((1, A), noise))


@pytest.fixture
def chain10():
    return make_stochastic_chain(10)


@pytest.fixture
def chain10_plain():
    return make_stochastic_chain(10, left_reward_mean=0.0)
