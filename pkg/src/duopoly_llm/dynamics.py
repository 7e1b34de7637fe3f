"""Learning recursions for the propensity, in log-odds coordinates.

The state is ``z = log(theta / (1 - theta))``. One retraining step adds
``gamma_n * D`` to ``z`` where ``gamma_n = eta / (n + 1) ** alpha`` and ``D`` is
either the batch IPW average (finite batch) or the exact payoff difference
(infinite-batch limit). ``z`` is clamped to ``[-z_cap, z_cap]``; touching the
clamp ends the run as absorbed at 0 or 1.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .estimator import EstimatorConfig, batch_mean
from .llm import UNIFORMS_PER_ROUND, sample_batch
from .market import (
    DEFAULT_CRITICAL_TOL,
    GameParams,
    LlmParams,
    Regime,
    RegimeKind,
    classify_regime,
    delta,
)
from .rng import RngStream

DEFAULT_ALPHA = 2.0 / 3.0
DEFAULT_ETA = 1.0
DEFAULT_HORIZON = 100_000
DEFAULT_Z_CAP = 30.0
DEFAULT_LIMIT_TOL = 0.05
DEFAULT_WINDOW_FRAC = 0.05
MAX_RECORDED = 2000
_CHUNK_UNIFORMS = 1 << 20


class LimitClass(str, enum.Enum):
    COMPETITIVE = "Competitive"
    COLLUSIVE_PLUS = "CollusivePlus"
    HALF = "Half"
    FULL_COLLUSION = "FullCollusion"
    UNDETERMINED = "Undetermined"


def sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def logit(theta: float) -> float:
    return math.log(theta / (1.0 - theta))


def step_size(n: int, alpha: float, eta: float) -> float:
    if n < 0:
        raise ValueError("step index must be nonnegative")
    return eta / (n + 1.0) ** alpha


def steps_for_time(T: float, alpha: float, eta: float) -> int:
    """Smallest ``n`` with ``sum(gamma_k for k < n) >= T``."""
    if T <= 0:
        raise ValueError("T must be positive")
    t, n = 0.0, 0
    while t < T:
        t += step_size(n, alpha, eta)
        n += 1
    return n


def step_times(n_steps: int, alpha: float, eta: float) -> np.ndarray:
    """Interpolation times ``t_n = sum(gamma_k for k < n)`` for ``n = 0..n_steps``."""
    gammas = eta / (np.arange(n_steps, dtype=float) + 1.0) ** alpha
    return np.concatenate(([0.0], np.cumsum(gammas)))


@dataclass(frozen=True)
class LearnConfig:
    """Everything a learning run needs besides the start point and the RNG.

    ``record_every=None`` thins to at most ``MAX_RECORDED`` samples.
    """

    game: GameParams = field(default_factory=lambda: GameParams(1.5))
    rho: float = 0.85
    batch_size: int = 1
    alpha: float = DEFAULT_ALPHA
    eta: float = DEFAULT_ETA
    horizon: int = DEFAULT_HORIZON
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    z_cap: float = DEFAULT_Z_CAP
    record_every: Optional[int] = None
    limit_tol: float = DEFAULT_LIMIT_TOL
    window_frac: float = DEFAULT_WINDOW_FRAC
    critical_tol: float = DEFAULT_CRITICAL_TOL

    def __post_init__(self):
        if not (0.5 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (1/2, 1], got {self.rho!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not (0.5 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (1/2, 1], got {self.alpha!r}")
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must lie in (0, 1], got {self.eta!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not self.z_cap >= 20:
            raise ValueError(f"z_cap must be at least 20, got {self.z_cap!r}")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be positive")
        if not (0 < self.window_frac <= 1):
            raise ValueError("window_frac must lie in (0, 1]")
        object.__setattr__(self, "batch_size", int(self.batch_size))
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def r(self) -> float:
        return self.game.r

    @property
    def thinning(self) -> int:
        if self.record_every is not None:
            return int(self.record_every)
        return max(1, self.horizon // MAX_RECORDED)

    def regime(self) -> Regime:
        return classify_regime(self.rho, self.game, self.critical_tol)

    def replace(self, **changes) -> "LearnConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "rho": self.rho,
            "batch_size": self.batch_size,
            "alpha": self.alpha,
            "eta": self.eta,
            "horizon": self.horizon,
            "epsilon_clip": self.estimator.epsilon_clip,
            "z_cap": self.z_cap,
            "record_every": self.thinning,
            "limit_tol": self.limit_tol,
            "window_frac": self.window_frac,
            "critical_tol": self.critical_tol,
        }


@dataclass
class Trajectory:
    steps: np.ndarray
    thetas: np.ndarray
    z_final: float
    steps_run: int
    absorbed: bool
    limit: LimitClass
    on_separatrix: bool = False

    @property
    def theta_final(self) -> float:
        return float(self.thetas[-1])


def _clamp(z: float, z_cap: float) -> float:
    return min(max(z, -z_cap), z_cap)


def deterministic_step(z: float, cfg: LearnConfig, n: int) -> float:
    theta = sigmoid(z)
    return _clamp(z + step_size(n, cfg.alpha, cfg.eta) * delta(LlmParams(theta, cfg.rho), cfg.game), cfg.z_cap)


def stochastic_step(z: float, cfg: LearnConfig, n: int, rng: RngStream) -> float:
    """One finite-batch update: draw a batch at ``sigmoid(z)``, move by its IPW mean."""
    p = LlmParams(sigmoid(z), cfg.rho)
    batch = sample_batch(p, cfg.game, cfg.batch_size, rng)
    dbar = batch_mean(batch, p, cfg.estimator)
    return _clamp(z + step_size(n, cfg.alpha, cfg.eta) * dbar, cfg.z_cap)


def admissible_limits(regime: Regime) -> dict:
    """Equilibria a run can settle on in the given regime, keyed by class."""
    kind = regime.kind
    if kind is RegimeKind.LOW_FIDELITY:
        return {LimitClass.COMPETITIVE: 0.0}
    if kind is RegimeKind.CRITICAL:
        return {LimitClass.COMPETITIVE: 0.0, LimitClass.HALF: 0.5}
    if kind is RegimeKind.HIGH_FIDELITY:
        return {LimitClass.COMPETITIVE: 0.0, LimitClass.COLLUSIVE_PLUS: regime.theta_plus}
    return {LimitClass.FULL_COLLUSION: 1.0}


def classify_limit(tail: Sequence[float], regime: Regime, tol: float = DEFAULT_LIMIT_TOL,
                   window: Optional[int] = None) -> LimitClass:
    """Equilibrium within ``tol`` of every one of the last ``window`` samples."""
    tail = np.asarray(tail, dtype=float)
    if window is None:
        window = max(1, int(math.ceil(DEFAULT_WINDOW_FRAC * len(tail))))
    if window < 1 or window > len(tail):
        raise ValueError("window must lie in [1, len(tail)]")
    last = tail[-window:]
    for kind, value in admissible_limits(regime).items():
        if np.all(np.abs(last - value) <= tol):
            return kind
    return LimitClass.UNDETERMINED


def _finish(rec_n, rec_theta, n_rec, z, n, absorbed, cfg: LearnConfig, regime: Regime,
            on_separatrix=False) -> Trajectory:
    steps = rec_n[:n_rec].copy()
    thetas = rec_theta[:n_rec].copy()
    if absorbed:
        # the run stopped at the barrier; only the final state is informative
        limit = classify_limit(thetas[-1:], regime, cfg.limit_tol, 1)
    else:
        window = max(1, int(math.ceil(cfg.window_frac * n_rec)))
        limit = classify_limit(thetas, regime, cfg.limit_tol, window)
    return Trajectory(steps, thetas, float(z), int(n), bool(absorbed), limit, on_separatrix)


def _check_theta0(theta0: float) -> float:
    theta0 = float(theta0)
    if not (0.0 < theta0 < 1.0):
        raise ValueError(f"theta0 must lie in (0, 1), got {theta0!r}")
    return theta0


def simulate_deterministic(theta0: float, cfg: LearnConfig) -> Trajectory:
    """Infinite-batch recursion ``z <- z + gamma_n * delta(theta)``."""
    theta0 = _check_theta0(theta0)
    regime = cfg.regime()
    every = cfg.thinning
    rec_n, rec_theta = _kernels.empty_record(cfg.horizon // every + 3)
    z, n, absorbed, n_rec = _kernels.deterministic_run(
        logit(theta0), cfg.horizon, cfg.rho, cfg.r, cfg.alpha, cfg.eta, cfg.z_cap,
        every, rec_n, rec_theta)
    on_sep = regime.theta_minus is not None and regime.kind is not RegimeKind.PERFECT_FIDELITY \
        and theta0 == regime.theta_minus
    return _finish(rec_n, rec_theta, n_rec, z, n, absorbed, cfg, regime, on_sep)


def simulate_stochastic(theta0: float, cfg: LearnConfig, rng: RngStream) -> Trajectory:
    """Finite-batch recursion driven by ``rng``.

    Bit-for-bit the same path as iterating ``stochastic_step`` with the same
    stream; uniforms are pulled in blocks of whole steps.
    """
    theta0 = _check_theta0(theta0)
    regime = cfg.regime()
    every = cfg.thinning
    b = cfg.batch_size
    rec_n, rec_theta = _kernels.empty_record(cfg.horizon // every + 3)
    rec_n[0], rec_theta[0] = 0, theta0
    n_rec = 1
    z, n, absorbed = logit(theta0), 0, False
    max_steps = max(1, _CHUNK_UNIFORMS // (UNIFORMS_PER_ROUND * b))
    chunk = min(256, max_steps)
    while n < cfg.horizon and not absorbed:
        k = min(chunk, cfg.horizon - n)
        u = rng.uniform((k, b, UNIFORMS_PER_ROUND))
        z, n, absorbed, n_rec = _kernels.stochastic_chunk(
            z, n, cfg.horizon, u, cfg.rho, cfg.r, cfg.estimator.epsilon_clip,
            cfg.alpha, cfg.eta, cfg.z_cap, every, rec_n, rec_theta, n_rec)
        chunk = min(2 * chunk, max_steps)
    return _finish(rec_n, rec_theta, n_rec, z, n, absorbed, cfg, regime)


def ode_flow(theta0: float, cfg: LearnConfig, t_end: float, dt: float = 0.01):
    """RK4 solution of ``d theta/dt = theta (1 - theta) delta(theta)``.

    Returns ``(t, theta)`` arrays on the grid ``0, dt, ..., t_end``.
    """
    theta0 = _check_theta0(theta0)
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    out = np.empty(n_steps + 1)
    _kernels.ode_rk4(theta0, cfg.rho, cfg.r, float(dt), n_steps, out)
    return np.arange(n_steps + 1) * dt, out
