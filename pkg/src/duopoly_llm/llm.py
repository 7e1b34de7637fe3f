"""Stochastic generator of market rounds.

Each round consumes exactly three uniforms from the stream, in order:
``u_mode`` (H-mode iff ``u_mode < theta``), then ``u_1`` and ``u_2`` (seller
``i`` receives the mode's action iff ``u_i < rho``, the other action
otherwise). A batch of ``b`` rounds therefore reads ``3b`` uniforms laid out
round by round.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from .market import Action, GameParams, LlmParams, payoffs
from .rng import RngStream

UNIFORMS_PER_ROUND = 3
TRACE_HEADER = ("round", "mode", "rec1", "rec2", "payoff1", "payoff2")


class Mode(str, enum.Enum):
    H = "HMode"
    L = "LMode"


@dataclass(frozen=True)
class RoundOutcome:
    mode: Mode
    rec1: Action
    rec2: Action
    payoff1: float
    payoff2: float


def rounds_from_uniforms(u: np.ndarray, theta: float, rho: float) -> Tuple[np.ndarray, ...]:
    """Map an ``(n, 3)`` block of uniforms to boolean H-indicators.

    Returns ``(mode_high, rec1_high, rec2_high)``.
    """
    u = np.asarray(u, dtype=float).reshape(-1, UNIFORMS_PER_ROUND)
    mode_high = u[:, 0] < theta
    rec1_high = np.where(u[:, 1] < rho, mode_high, ~mode_high)
    rec2_high = np.where(u[:, 2] < rho, mode_high, ~mode_high)
    return mode_high, rec1_high, rec2_high


def draw_rounds(p: LlmParams, n: int, rng: RngStream) -> Tuple[np.ndarray, ...]:
    """Vectorised draw of ``n`` rounds as boolean H-indicator arrays."""
    u = rng.uniform((int(n), UNIFORMS_PER_ROUND))
    return rounds_from_uniforms(u, p.theta, p.rho)


def _outcome(mode_high: bool, rec1_high: bool, rec2_high: bool, g: GameParams) -> RoundOutcome:
    a1 = Action.H if rec1_high else Action.L
    a2 = Action.H if rec2_high else Action.L
    pi1, pi2 = payoffs(a1, a2, g)
    return RoundOutcome(Mode.H if mode_high else Mode.L, a1, a2, pi1, pi2)


def sample_batch(p: LlmParams, g: GameParams, b: int, rng: RngStream) -> List[RoundOutcome]:
    """``b`` independent rounds at a frozen propensity, mode redrawn per round."""
    if int(b) != b or b < 1:
        raise ValueError(f"batch size must be a positive integer, got {b!r}")
    mode_high, rec1_high, rec2_high = draw_rounds(p, int(b), rng)
    return [_outcome(m, x, y, g) for m, x, y in zip(mode_high, rec1_high, rec2_high)]


def sample_round(p: LlmParams, g: GameParams, rng: RngStream) -> RoundOutcome:
    return sample_batch(p, g, 1, rng)[0]


def write_round_trace(path, outcomes: Iterable[RoundOutcome]) -> None:
    """Dump rounds as ``round,mode,rec1,rec2,payoff1,payoff2`` CSV rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for i, o in enumerate(outcomes):
            writer.writerow([i, o.mode.value, o.rec1.value, o.rec2.value,
                             repr(o.payoff1), repr(o.payoff2)])
