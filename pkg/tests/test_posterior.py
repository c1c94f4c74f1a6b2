import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pspe.envs import make_random_mdp
from pspe.errors import IndexOutOfRange, InvalidShape
from pspe.mdp import simulate_episode, validate_mdp
from pspe.posterior import (
    MdpBelief,
    PriorConfig,
    belief_for,
    init_belief,
    load_belief,
    posterior_marginals,
    sample_mdp,
    save_belief,
    update_belief,
)

UNIFORM3 = np.full(3, 1 / 3)


def repeated(steps, n):
    return list(steps) * n


# --- init_belief -------------------------------------------------------------------

def test_prior_is_uniform_dirichlet_and_standard_normal():
    b = init_belief(3, 2, 4, UNIFORM3)
    for s in range(3):
        for a in range(2):
            conc, mean, var = posterior_marginals(b, s, a)
            assert conc.tolist() == [1.0, 1.0, 1.0]
            assert (mean, var) == (0.0, 1.0)


def test_init_is_deterministic():
    assert init_belief(3, 2, 4, UNIFORM3) == init_belief(3, 2, 4, UNIFORM3)


def test_init_rejects_bad_shapes():
    with pytest.raises(InvalidShape):
        init_belief(3, 2, 4, [0.5, 0.5])
    with pytest.raises(InvalidShape):
        init_belief(0, 2, 4, [])


# --- update_belief ------------------------------------------------------------------

def test_transition_count_increment():
    b = update_belief(init_belief(3, 2, 1, UNIFORM3), [(0, 1, 0.0, 2)])
    assert posterior_marginals(b, 0, 1)[0].tolist() == [1.0, 1.0, 2.0]


def test_single_reward_update():
    b = update_belief(init_belief(3, 2, 1, UNIFORM3), [(1, 0, 1.0, 1)])
    _, mean, var = posterior_marginals(b, 1, 0)
    assert (mean, var) == (0.5, 0.5)


def test_two_reward_update():
    b = update_belief(init_belief(3, 2, 2, UNIFORM3), [(1, 0, 1.0, 1), (1, 0, 2.0, 1)])
    _, mean, var = posterior_marginals(b, 1, 0)
    assert mean == pytest.approx(1.0, abs=1e-15)
    assert var == pytest.approx(1 / 3, abs=1e-15)


def test_three_transitions_to_second_state():
    b = init_belief(2, 1, 3, [1.0, 0.0])
    b = update_belief(b, [(0, 0, 0.0, 1), (0, 0, 0.0, 1), (0, 0, 0.0, 1)])
    assert posterior_marginals(b, 0, 0)[0].tolist() == [1.0, 4.0]


def test_general_conjugate_formula():
    prior = PriorConfig(concentration=0.5, reward_mean=2.0, reward_variance=4.0, likelihood_variance=0.25)
    b = update_belief(init_belief(1, 1, 2, [1.0], prior), [(0, 0, 1.0, 0), (0, 0, 3.0, 0)])
    conc, mean, var = posterior_marginals(b, 0, 0)
    precision = 1 / 4.0 + 2 / 0.25
    assert var == pytest.approx(1 / precision, abs=1e-15)
    assert mean == pytest.approx((2.0 / 4.0 + 4.0 / 0.25) / precision, abs=1e-14)
    assert conc.tolist() == [2.5]


def test_update_rejects_out_of_range():
    b = init_belief(2, 2, 1, [1.0, 0.0])
    with pytest.raises(IndexOutOfRange):
        update_belief(b, [(0, 2, 0.0, 1)])
    with pytest.raises(IndexOutOfRange):
        update_belief(b, [(0, 0, 0.0, 5)])
    with pytest.raises(IndexOutOfRange):
        posterior_marginals(b, 2, 0)


def test_update_does_not_mutate_input():
    b0 = init_belief(2, 2, 1, [1.0, 0.0])
    update_belief(b0, [(0, 0, 1.0, 1)])
    assert b0 == init_belief(2, 2, 1, [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_updates_commute_and_batch_equals_sequential(seed):
    rng = np.random.default_rng(seed)
    m = make_random_mdp(3, 2, 4, rng)
    b0 = belief_for(m)
    t1 = simulate_episode(m, rng.integers(2, size=(3, 4)), rng)
    t2 = simulate_episode(m, rng.integers(2, size=(3, 4)), rng)
    ab = update_belief(update_belief(b0, t1), t2)
    ba = update_belief(update_belief(b0, t2), t1)
    assert np.array_equal(ab.concentration, ba.concentration)
    assert np.array_equal(ab.reward_count, ba.reward_count)
    np.testing.assert_allclose(ab.reward_sum, ba.reward_sum, rtol=0, atol=1e-12)

    seq = b0
    for step in t1:
        seq = update_belief(seq, [step])
    one = update_belief(b0, t1)
    assert np.array_equal(seq.concentration, one.concentration)
    assert np.array_equal(seq.reward_count, one.reward_count)
    np.testing.assert_allclose(seq.reward_sum, one.reward_sum, rtol=0, atol=1e-12)


def test_belief_json_round_trip(tmp_path):
    b = update_belief(init_belief(3, 2, 2, UNIFORM3), [(0, 1, 0.7, 2), (2, 0, -0.3, 0)])
    save_belief(b, tmp_path / "b.json")
    assert load_belief(tmp_path / "b.json") == b


# --- sample_mdp -----------------------------------------------------------------------

def test_prior_transition_mean_is_uniform():
    b = init_belief(3, 1, 1, UNIFORM3)
    rng = np.random.default_rng(0)
    rows = np.array([sample_mdp(b, rng).transitions[0, 0] for _ in range(10_000)])
    se = rows.std(axis=0, ddof=1) / np.sqrt(len(rows))
    assert np.all(np.abs(rows.mean(axis=0) - 1 / 3) < 3 * se)


def test_concentrated_transition_row_matches_beta_tail():
    S = 3
    b = update_belief(init_belief(S, 1, 1, UNIFORM3), repeated([(0, 0, 0.0, 1)], 1000))
    rng = np.random.default_rng(1)
    n = 4000
    hits = np.mean([sample_mdp(b, rng).transitions[0, 0, 1] >= 0.99 for _ in range(n)])
    # marginal of one Dirichlet(1, 1001, 1) coordinate is Beta(1001, 2)
    p = stats.beta.sf(0.99, 1001, S - 1)
    assert p >= 0.95
    assert hits >= 0.95
    assert abs(hits - p) < 3 * np.sqrt(p * (1 - p) / n) + 1e-3


def test_concentrated_reward():
    b = update_belief(init_belief(1, 1, 1, [1.0]), repeated([(0, 0, 1.0, 0)], 1000))
    rng = np.random.default_rng(2)
    r = np.array([sample_mdp(b, rng).mean_reward[0, 0] for _ in range(2000)])
    assert np.mean(np.abs(r - 1.0) <= 0.1) >= 0.99


def test_samples_are_valid_mdps():
    rng = np.random.default_rng(3)
    m = make_random_mdp(4, 3, 5, rng)
    b = update_belief(belief_for(m), simulate_episode(m, rng.integers(3, size=(4, 5)), rng))
    for _ in range(50):
        s = sample_mdp(b, rng)
        assert validate_mdp(s) is s
        assert np.array_equal(s.initial_dist, m.initial_dist)
        assert np.all(s.reward_noise == 1.0)


def test_posterior_concentrates_with_more_data():
    rng = np.random.default_rng(4)
    m = make_random_mdp(3, 2, 3, rng)
    b = belief_for(m)
    errors = []
    n_seen = 0
    for target in (10, 100, 1000):
        while n_seen < target:
            b = update_belief(b, simulate_episode(m, rng.integers(2, size=(3, 3)), rng))
            n_seen += 1
        draws = [sample_mdp(b, rng) for _ in range(200)]
        errors.append(np.mean([np.abs(d.mean_reward - m.mean_reward).mean()
                               + np.abs(d.transitions - m.transitions).mean() for d in draws]))
    assert errors[0] > errors[1] > errors[2]


def test_belief_is_frozen():
    b = init_belief(2, 2, 1, [1.0, 0.0])
    assert isinstance(b, MdpBelief)
    with pytest.raises(ValueError):
        b.concentration[0, 0, 0] = 5.0
