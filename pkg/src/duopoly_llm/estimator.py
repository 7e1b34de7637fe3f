"""Inverse-probability-weighted estimate of the payoff difference.

A single observation ``(S, profit)`` scores ``profit / p_H`` when ``S = H`` and
``-profit / p_L`` when ``S = L``. Its expectation is exactly
``market.delta``. With ``epsilon_clip > 0`` each denominator is floored at
epsilon independently; the floored pair is not renormalised.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .llm import RoundOutcome
from .market import Action, DegenerateConditioningError, GameParams, LlmParams, joint_probs, marginal_p_high, payoffs

DEFAULT_EPSILON_CLIP = 1e-3


@dataclass(frozen=True)
class EstimatorConfig:
    epsilon_clip: float = DEFAULT_EPSILON_CLIP

    def __post_init__(self):
        eps = float(self.epsilon_clip)
        if not (0.0 <= eps <= 0.25):
            raise ValueError(f"epsilon_clip must lie in [0, 1/4], got {self.epsilon_clip!r}")
        object.__setattr__(self, "epsilon_clip", eps)


def clipped_probs(p: LlmParams, cfg: EstimatorConfig) -> Tuple[float, float]:
    p_high = marginal_p_high(p)
    eps = cfg.epsilon_clip
    return max(p_high, eps), max(1.0 - p_high, eps)


def ipw_score(action: Action, payoff: float, p: LlmParams, cfg: EstimatorConfig) -> float:
    p_high, p_low = clipped_probs(p, cfg)
    if Action(action) is Action.H:
        if p_high <= 0.0:
            raise DegenerateConditioningError("observed H with p_H = 0 and no clipping")
        return payoff / p_high
    if p_low <= 0.0:
        raise DegenerateConditioningError("observed L with p_L = 0 and no clipping")
    return -payoff / p_low


def batch_mean(batch: Sequence[RoundOutcome], p: LlmParams, cfg: EstimatorConfig) -> float:
    """Average score over every (round, seller) pair of one batch.

    ``p`` must carry the propensity the batch was generated at.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    total = 0.0
    for o in batch:
        total += ipw_score(o.rec1, o.payoff1, p, cfg)
        total += ipw_score(o.rec2, o.payoff2, p, cfg)
    return total / (2 * len(batch))


def batch_mean_arrays(rec1_high: np.ndarray, rec2_high: np.ndarray, p: LlmParams,
                      g: GameParams, cfg: EstimatorConfig) -> np.ndarray:
    """Vectorised ``batch_mean`` over a ``(n_batches, b)`` layout of rounds."""
    rec1_high = np.atleast_2d(rec1_high)
    rec2_high = np.atleast_2d(rec2_high)
    r = g.r
    p_high, p_low = clipped_probs(p, cfg)
    pi1 = np.where(rec1_high, np.where(rec2_high, 2 * r, r), np.where(rec2_high, 2 + r, 2.0))
    pi2 = np.where(rec2_high, np.where(rec1_high, 2 * r, r), np.where(rec1_high, 2 + r, 2.0))
    d1 = np.where(rec1_high, pi1 / p_high, -pi1 / p_low)
    d2 = np.where(rec2_high, pi2 / p_high, -pi2 / p_low)
    return 0.5 * (d1 + d2).mean(axis=1)


def expected_score(p: LlmParams, g: GameParams, cfg: EstimatorConfig) -> float:
    """Exact expectation of ``ipw_score`` over the four joint outcomes.

    Both sellers' scores are averaged, matching one round of ``batch_mean``.
    """
    jp = joint_probs(p)
    total = 0.0
    for prob, (a1, a2) in zip(jp.as_tuple(), ((Action.H, Action.H), (Action.H, Action.L),
                                               (Action.L, Action.H), (Action.L, Action.L))):
        if prob == 0.0:
            continue
        pi1, pi2 = payoffs(a1, a2, g)
        total += prob * 0.5 * (ipw_score(a1, pi1, p, cfg) + ipw_score(a2, pi2, p, cfg))
    return total


def score_bound(rho: float, g: GameParams) -> float:
    """Uniform bound on |score| over theta for unclipped ``rho < 1``."""
    return g.payoff_max / (1.0 - rho)
