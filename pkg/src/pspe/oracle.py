"""Brute-force reference computations and the invariant suite behind ``pspe oracle-check``.

Nothing here shares code with the dynamic-programming paths it checks: policy
values come from enumerating every state path, and optimal values from
evaluating every deterministic policy.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envs import make_random_mdp
from .mdp import TabularMdp, batch_policy_values
from .planner import backward_induction, batch_is_member, enumerate_policies
from .posterior import init_belief, posterior_marginals, update_belief


def path_enumeration_values(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """``v[s, h]`` as an explicit sum over every continuation path from (s, h)."""
    S, H = mdp.S, mdp.H
    v = np.zeros((S, H))
    for h in range(H):
        steps = H - h
        for s in range(S):
            total = 0.0
            # a path is the sequence of successor states after each of the remaining steps
            for succ in itertools.product(range(S), repeat=steps):
                prob, ret, cur = 1.0, 0.0, s
                for i, nxt in enumerate(succ):
                    a = policy[cur, h + i]
                    ret += mdp.mean_reward[cur, a]
                    prob *= mdp.transitions[cur, a, nxt]
                    cur = nxt
                    if prob == 0.0:
                        break
                total += prob * ret
            v[s, h] = total
    return v


@dataclass
class BruteForceOptimum:
    v_star: np.ndarray  # (S, H) best value over all policies
    optimal: set  # policy keys optimal at every (s, h)


def brute_force_optimum(mdp: TabularMdp, tol: float = 1e-9, policy_limit: int = 10**6) -> BruteForceOptimum:
    chunks = list(enumerate_policies(mdp.S, mdp.A, mdp.H, policy_limit))
    values = [batch_policy_values(mdp, c) for c in chunks]
    v_star = np.max([v.max(axis=0) for v in values], axis=0)
    optimal = set()
    for c, v in zip(chunks, values):
        good = np.all(v >= v_star - tol, axis=(1, 2))
        for pi in c[good]:
            optimal.add(pi.tobytes())
    return BruteForceOptimum(v_star, optimal)


# ---------------------------------------------------------------------------
# Invariant suite
# ---------------------------------------------------------------------------


def check_planner(n_mdps: int = 200, seed: int = 0, tol: float = 1e-9) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_mdps):
        S, A, H = (int(x) for x in rng.integers(1, 4, size=3))
        mdp = make_random_mdp(S, A, H, rng)
        sets = backward_induction(mdp, tol)
        bf = brute_force_optimum(mdp, tol)
        err = float(np.abs(sets.v[:, 0] - bf.v_star[:, 0]).max())
        worst = max(worst, err)
        if err > tol:
            return False, f"MDP {i}: V* differs from enumeration by {err:.3g}"
        members = set()
        for chunk in enumerate_policies(S, A, H):
            for pi in chunk[batch_is_member(sets.mask, chunk)]:
                members.add(pi.tobytes())
        if members != bf.optimal:
            return False, f"MDP {i}: optimal-action product != enumerated optimal policies"
    return True, f"{n_mdps} random MDPs, max |V* - brute force| = {worst:.3g}"


def check_policy_evaluation(n_mdps: int = 50, seed: int = 1, tol: float = 1e-9) -> tuple[bool, str]:
    from .mdp import evaluate_policy

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_mdps):
        S, A, H = (int(x) for x in rng.integers(1, 4, size=3))
        mdp = make_random_mdp(S, A, H, rng)
        pi = rng.integers(A, size=(S, H))
        err = float(np.abs(evaluate_policy(mdp, pi).v - path_enumeration_values(mdp, pi)).max())
        worst = max(worst, err)
        if err > tol:
            return False, f"MDP {i}: evaluation differs from path enumeration by {err:.3g}"
    return True, f"{n_mdps} random policies, max error {worst:.3g}"


def check_conjugate(seed: int = 2, n_obs: int = 10_000, tol: float = 1e-12) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    S, A = 4, 3
    belief = init_belief(S, A, 1, np.full(S, 1.0 / S))
    counts = np.ones((S, A, S))
    n = np.zeros((S, A))
    total = np.zeros((S, A))
    for _ in range(n_obs):
        s, a, s2 = int(rng.integers(S)), int(rng.integers(A)), int(rng.integers(S))
        r = float(rng.normal())
        belief = update_belief(belief, [(s, a, r, s2)])
        counts[s, a, s2] += 1
        n[s, a] += 1
        total[s, a] += r
    for s in range(S):
        for a in range(A):
            conc, mean, var = posterior_marginals(belief, s, a)
            if not np.array_equal(conc, counts[s, a]):
                return False, f"Dirichlet counts differ at ({s}, {a})"
            if abs(mean - total[s, a] / (n[s, a] + 1)) > tol or abs(var - 1 / (n[s, a] + 1)) > tol:
                return False, f"Normal posterior differs at ({s}, {a})"
    return True, f"{n_obs} observations, closed forms matched"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "conjugate-exactness": check_conjugate,
    "policy-evaluation": check_policy_evaluation,
    "planner-vs-enumeration": check_planner,
}


def run_all(report: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        passed, detail = fn()
        ok &= passed
        report(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return ok
