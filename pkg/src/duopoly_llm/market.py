"""Closed-form mathematics of the shared-LLM duopoly pricing game.

Everything here is a pure function over small frozen value types: the payoff
table, the joint law of the two sellers' recommendations, the conditional
payoff difference ``delta`` and the analytic thresholds that partition the
(rho, theta) plane into regimes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

DEFAULT_CRITICAL_TOL = 1e-9
_S_ONE_TOL = 1e-12


class Action(str, enum.Enum):
    H = "H"
    L = "L"


class DegenerateConditioningError(ZeroDivisionError):
    """Conditioning on a recommendation that has probability zero."""


@dataclass(frozen=True)
class GameParams:
    """Duopoly with relative profitability ``r`` of the high price.

    Payoffs are ``(H,H) -> (2r, 2r)``, ``(H,L) -> (r, 2+r)``,
    ``(L,H) -> (2+r, r)`` and ``(L,L) -> (2, 2)``.
    """

    r: float

    def __post_init__(self):
        r = float(self.r)
        if not (1.0 < r < 2.0):
            raise ValueError(f"r must lie strictly inside (1, 2), got {self.r!r}")
        object.__setattr__(self, "r", r)

    @property
    def payoff_max(self) -> float:
        return 2.0 + self.r


@dataclass(frozen=True)
class LlmParams:
    """Propensity ``theta`` in [0, 1] and output fidelity ``rho`` in [1/2, 1]."""

    theta: float
    rho: float

    def __post_init__(self):
        theta, rho = float(self.theta), float(self.rho)
        if not (0.0 <= theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta!r}")
        if not (0.5 <= rho <= 1.0):
            raise ValueError(f"rho must lie in [0.5, 1], got {self.rho!r}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True)
class JointProbs:
    p_hh: float
    p_hl: float
    p_lh: float
    p_ll: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.p_hh, self.p_hl, self.p_lh, self.p_ll)


class RegimeKind(str, enum.Enum):
    LOW_FIDELITY = "LowFidelity"
    CRITICAL = "Critical"
    HIGH_FIDELITY = "HighFidelity"
    PERFECT_FIDELITY = "PerfectFidelity"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    rho: float
    r: float
    rho_c: float
    s: float
    theta_minus: Optional[float] = None
    theta_plus: Optional[float] = None

    @property
    def has_bounds(self) -> bool:
        return self.theta_minus is not None


def payoffs(a1: Action, a2: Action, g: GameParams) -> Tuple[float, float]:
    a1, a2 = Action(a1), Action(a2)
    r = g.r
    if a1 is Action.H:
        return (2.0 * r, 2.0 * r) if a2 is Action.H else (r, 2.0 + r)
    return (2.0 + r, r) if a2 is Action.H else (2.0, 2.0)


def joint_probs(p: LlmParams) -> JointProbs:
    theta, rho = p.theta, p.rho
    miss = 1.0 - rho
    p_mixed = rho * miss
    return JointProbs(
        p_hh=theta * rho * rho + (1.0 - theta) * miss * miss,
        p_hl=p_mixed,
        p_lh=p_mixed,
        p_ll=theta * miss * miss + (1.0 - theta) * rho * rho,
    )


def marginal_p_high(p: LlmParams) -> float:
    """Probability that a single seller is told to price high."""
    return p.theta * p.rho + (1.0 - p.theta) * (1.0 - p.rho)


def delta(p: LlmParams, g: GameParams) -> float:
    """Expected profit given an H recommendation minus that given L.

    Uses the simplified rational form; at ``rho == 1`` the constant
    ``2r - 2`` is returned for every theta.
    """
    if p.rho == 1.0:
        return 2.0 * g.r - 2.0
    p_high = marginal_p_high(p)
    p_low = 1.0 - p_high
    if p_high <= 0.0 or p_low <= 0.0:
        raise DegenerateConditioningError(
            f"p_H={p_high} leaves one recommendation with zero probability"
        )
    return 2.0 * (g.r - 1.0) - g.r * p.rho * (1.0 - p.rho) / (p_high * p_low)


def delta_from_conditionals(p: LlmParams, g: GameParams) -> float:
    """``delta`` built directly as E[profit | H] - E[profit | L].

    Independent of the simplified closed form; used as its cross-check.
    """
    jp = joint_probs(p)
    r = g.r
    mass_h = jp.p_hh + jp.p_hl
    mass_l = jp.p_lh + jp.p_ll
    if mass_h <= 0.0 or mass_l <= 0.0:
        raise DegenerateConditioningError("conditioning event has zero probability")
    # seller 1's view; seller 2 is symmetric
    mean_h = (jp.p_hh * 2.0 * r + jp.p_hl * r) / mass_h
    mean_l = (jp.p_lh * (2.0 + r) + jp.p_ll * 2.0) / mass_l
    return mean_h - mean_l


def _check_rho_open(rho: float) -> float:
    rho = float(rho)
    if not (0.5 < rho <= 1.0):
        raise ValueError(f"rho must lie in (1/2, 1], got {rho!r}")
    return rho


def s_statistic(rho: float, g: GameParams) -> float:
    """Ratio of miscoordination cost to coordination benefit.

    ``s < 1`` is exactly the condition for an interval of theta on which
    the high price outperforms the low price.
    """
    rho = _check_rho_open(rho)
    r = g.r
    return 2.0 * (2.0 - r) * rho * (1.0 - rho) / ((r - 1.0) * (2.0 * rho - 1.0) ** 2)


def theta_bounds(rho: float, g: GameParams) -> Optional[Tuple[float, float]]:
    """Zeros ``(theta_minus, theta_plus)`` of ``delta``, or None when s > 1."""
    s = s_statistic(rho, g)
    if abs(s - 1.0) <= _S_ONE_TOL:
        return (0.5, 0.5)
    if s > 1.0:
        return None
    half_width = 0.5 * math.sqrt(1.0 - s)
    return (0.5 - half_width, 0.5 + half_width)


def rho_critical(g: GameParams) -> float:
    return 0.5 * (1.0 + math.sqrt((2.0 - g.r) / g.r))


def classify_regime(rho: float, g: GameParams, tol: float = DEFAULT_CRITICAL_TOL) -> Regime:
    rho = _check_rho_open(rho)
    if not tol > 0:
        raise ValueError("tol must be positive")
    rho_c = rho_critical(g)
    s = s_statistic(rho, g)
    if rho == 1.0:
        kind = RegimeKind.PERFECT_FIDELITY
    elif abs(rho - rho_c) <= tol:
        kind = RegimeKind.CRITICAL
    elif rho < rho_c:
        kind = RegimeKind.LOW_FIDELITY
    else:
        kind = RegimeKind.HIGH_FIDELITY

    if kind is RegimeKind.CRITICAL:
        # s may sit a hair above 1 inside the tolerance band; the zeros have
        # merged at 1/2 either way
        bounds = theta_bounds(rho, g) or (0.5, 0.5)
    elif kind is RegimeKind.LOW_FIDELITY:
        bounds = None
    else:
        bounds = theta_bounds(rho, g)
    lo, hi = bounds if bounds is not None else (None, None)
    return Regime(kind=kind, rho=rho, r=g.r, rho_c=rho_c, s=s, theta_minus=lo, theta_plus=hi)
