"""Finite-horizon dynamic programming over tabular MDPs.

The optimal-policy set of an MDP is the product, over every (state, stage)
coordinate, of the actions attaining the optimal Q-value there. It is held as a
boolean mask and never enumerated except by the explicit brute-force helpers
(:func:`enumerate_policies`, :func:`enumerate_gaps`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import EmptyDifference, InvalidShape, TooManyPolicies
from .mdp import TabularMdp, as_policy, mean_episodic_rewards

DEFAULT_TIE_TOL = 1e-9
DEFAULT_MAX_REJECTIONS = 64
DEFAULT_POLICY_LIMIT = 10**6


@dataclass(frozen=True, eq=False)
class OptimalActionSets:
    mask: np.ndarray  # (S, H, A) bool; mask[s, h, a] iff a is optimal at (s, h)
    q: np.ndarray  # (S, A, H) optimal Q-values
    v: np.ndarray  # (S, H) optimal values
    tie_tol: float = DEFAULT_TIE_TOL

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape[:2]

    @property
    def num_actions(self) -> int:
        return self.mask.shape[2]

    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=-1)

    def count(self) -> int:
        """Exact number of optimal policies."""
        return math.prod(int(c) for c in self.sizes().ravel())

    def log_count(self) -> float:
        return float(np.log(self.sizes()).sum())

    def action_set(self, s: int, h: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.mask[s, h]))


def intersection_count(a: OptimalActionSets, b: OptimalActionSets) -> int:
    """|Pi_a ∩ Pi_b|, the product of coordinate-wise intersection sizes."""
    both = (a.mask & b.mask).sum(axis=-1)
    return math.prod(int(c) for c in both.ravel())


def difference_is_empty(tilde: OptimalActionSets, base: OptimalActionSets) -> bool:
    """True iff every policy of ``tilde`` is also optimal for ``base``.

    Equivalent to ``intersection_count(tilde, base) == tilde.count()`` since both
    sets are products of non-empty coordinate sets; the mask test avoids big
    integers in the inner loop.
    """
    return not np.any(tilde.mask & ~base.mask)


# ---------------------------------------------------------------------------
# Batched kernels (n MDPs at once); used by the agents and estimators.
# ---------------------------------------------------------------------------


def batch_optimal_masks(P: np.ndarray, R: np.ndarray, H: int,
                        tie_tol: float = DEFAULT_TIE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Backward induction for a stack of MDPs.

    ``P`` is ``(n, S, A, S)``, ``R`` is ``(n, S, A)``. Returns ``(mask, q)`` with
    ``mask`` of shape ``(n, S, H, A)`` and ``q`` of shape ``(n, S, A, H)``.
    """
    n, S, A = R.shape
    mask = np.empty((n, S, H, A), dtype=bool)
    q = np.empty((n, S, A, H))
    v_next = np.zeros((n, S, 1))
    for h in range(H - 1, -1, -1):
        q_h = R + np.matmul(P, v_next[:, None, :, :])[..., 0]
        v_h = q_h.max(axis=-1)
        mask[:, :, h, :] = q_h >= (v_h - tie_tol)[..., None]
        q[:, :, :, h] = q_h
        v_next = v_h[..., None]
    return mask, q


def batch_sample_from_masks(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one uniform policy from each product set in a ``(..., S, H, A)`` mask."""
    counts = mask.sum(axis=-1)
    pick = np.floor(rng.random(counts.shape) * counts).astype(np.int64)
    pick = np.minimum(pick, counts - 1)
    # index of the (pick+1)-th True entry along the action axis
    return np.argmax(np.cumsum(mask, axis=-1) > pick[..., None], axis=-1)


def batch_is_member(mask: np.ndarray, policies: np.ndarray) -> np.ndarray:
    """Whether each ``(S, H)`` policy in ``policies`` lies in the product set ``mask``."""
    policies = np.asarray(policies)
    full = np.broadcast_to(mask, np.broadcast_shapes(mask.shape[:-1], policies.shape) + mask.shape[-1:])
    picked = np.take_along_axis(full, np.broadcast_to(policies, full.shape[:-1])[..., None], axis=-1)[..., 0]
    return picked.reshape(picked.shape[: picked.ndim - 2] + (-1,)).all(axis=-1)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def backward_induction(mdp: TabularMdp, tie_tol: float = DEFAULT_TIE_TOL) -> OptimalActionSets:
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    mask, q = batch_optimal_masks(mdp.transitions[None], mdp.mean_reward[None], mdp.H, tie_tol)
    mask, q = mask[0], q[0]
    v = q.max(axis=1)
    for x in (mask, q, v):
        x.setflags(write=False)
    return OptimalActionSets(mask=mask, q=q, v=v, tie_tol=tie_tol)


def sample_optimal_policy(sets: OptimalActionSets, rng: np.random.Generator) -> np.ndarray:
    return batch_sample_from_masks(sets.mask, rng)


def is_optimal_policy(sets: OptimalActionSets, policy) -> bool:
    pi = as_policy(policy, shape=sets.shape, num_actions=sets.num_actions)
    return bool(batch_is_member(sets.mask, pi))


def sample_policy_from_difference(sets_tilde: OptimalActionSets, sets_base: OptimalActionSets,
                                  rng: np.random.Generator,
                                  max_rejections: int = DEFAULT_MAX_REJECTIONS) -> np.ndarray:
    """Random policy optimal for ``sets_tilde`` but not for ``sets_base``.

    Rejection sampling from the uniform distribution on ``sets_tilde`` is exact.
    If ``max_rejections`` draws all land inside ``sets_base``, one coordinate
    where the sets disagree is forced to a differing action; this fallback is
    only approximately uniform over the difference.
    """
    if sets_tilde.shape != sets_base.shape or sets_tilde.num_actions != sets_base.num_actions:
        raise InvalidShape("action sets have different shapes")
    extra = sets_tilde.mask & ~sets_base.mask
    if not extra.any():
        raise EmptyDifference("every policy of the candidate set is optimal for the base set")

    remaining = int(max_rejections)
    chunk = 4
    while remaining > 0:
        k = min(chunk, remaining)
        draws = batch_sample_from_masks(np.broadcast_to(sets_tilde.mask, (k,) + sets_tilde.mask.shape), rng)
        outside = ~batch_is_member(sets_base.mask, draws)
        if outside.any():
            return draws[int(np.argmax(outside))]
        remaining -= k
        chunk *= 2

    coords = np.argwhere(extra.any(axis=-1))
    s, h = coords[rng.integers(len(coords))]
    pi = batch_sample_from_masks(sets_tilde.mask, rng)
    choices = np.flatnonzero(extra[s, h])
    pi[s, h] = choices[rng.integers(len(choices))]
    return pi


# ---------------------------------------------------------------------------
# Brute force over all deterministic policies (small instances only)
# ---------------------------------------------------------------------------


def enumerate_policies(S: int, A: int, H: int, policy_limit: int = DEFAULT_POLICY_LIMIT,
                       chunk_size: int = 1 << 15) -> Iterator[np.ndarray]:
    """Yield every deterministic policy as ``(k, S, H)`` chunks, in mixed-radix order."""
    total = A ** (S * H)
    if total > policy_limit:
        raise TooManyPolicies(f"{A}^({S}*{H}) policies exceed the limit of {policy_limit}")
    radix = A ** np.arange(S * H, dtype=np.int64)
    for start in range(0, total, chunk_size):
        idx = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % A
        yield digits.reshape(-1, S, H)


class GapSummary(NamedTuple):
    min_gap: float
    max_gap: float
    num_optimal: int
    mu_star: float


def enumerate_gaps(mdp: TabularMdp, tie_tol: float = DEFAULT_TIE_TOL,
                   policy_limit: int = DEFAULT_POLICY_LIMIT) -> GapSummary:
    """Smallest and largest gap among sub-optimal policies, by exhaustive evaluation.

    When every policy is optimal both gaps are reported as 0.
    """
    sets = backward_induction(mdp, tie_tol)
    values, optimal = [], []
    for chunk in enumerate_policies(mdp.S, mdp.A, mdp.H, policy_limit):
        values.append(mean_episodic_rewards(mdp, chunk))
        optimal.append(batch_is_member(sets.mask, chunk))
    mu = np.concatenate(values)
    opt = np.concatenate(optimal)
    mu_star = float(mu.max())
    gaps = mu_star - mu[~opt]
    if gaps.size == 0:
        return GapSummary(0.0, 0.0, int(opt.sum()), mu_star)
    return GapSummary(float(gaps.min()), float(gaps.max()), int(opt.sum()), mu_star)
