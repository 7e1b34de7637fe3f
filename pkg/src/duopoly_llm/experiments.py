"""Monte Carlo experiments on equilibrium selection.

Every replication owns the random stream ``RngStream(seed, stream_id_for(label, k))``
where ``label`` names the experiment cell, so results depend only on the seed
and never on the worker count or scheduling. Work items fan out over a
thread pool (the compiled kernels release the GIL) and are gathered in input
order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .dynamics import LearnConfig, LimitClass, simulate_deterministic, simulate_stochastic, steps_for_time
from .market import GameParams, RegimeKind
from .rng import RngStream, stream_id_for

MAX_UNDETERMINED_FRACTION = 0.20
WORKERS_ENV = "DUOPOLY_LLM_WORKERS"


class UndeterminedRateError(RuntimeError):
    """Too many runs failed to settle on an equilibrium within the horizon."""


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """``map`` over a thread pool, results in input order."""
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    if trials <= 0:
        return 0.0, 1.0
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # clamp the rounding noise so lo <= phat <= hi holds exactly
    return min(max(0.0, centre - half), phat), max(min(1.0, centre + half), phat)


@dataclass(frozen=True)
class SelectionEstimate:
    p_plus_hat: float
    replications: int
    ci_low: float
    ci_high: float
    undetermined_count: int
    collusive_count: int = 0
    competitive_count: int = 0

    @property
    def determined(self) -> int:
        return self.replications - self.undetermined_count


def _cell_label(kind: str, theta0: float, cfg: LearnConfig) -> tuple:
    return (kind, repr(float(theta0)), cfg.batch_size, repr(cfg.rho), repr(cfg.r))


def run_replications(theta0: float, cfg: LearnConfig, reps: int, seed: int,
                     label: tuple, workers: Optional[int] = None) -> list:
    """Final ``Trajectory`` of each replication, in replication order."""
    def one(k):
        return simulate_stochastic(theta0, cfg, RngStream(seed, stream_id_for(*label, k)))
    return parallel_map(one, range(int(reps)), workers)


def summarize_limits(limits: Sequence[LimitClass]) -> SelectionEstimate:
    reps = len(limits)
    n_plus = sum(1 for x in limits if x is LimitClass.COLLUSIVE_PLUS)
    n_undet = sum(1 for x in limits if x is LimitClass.UNDETERMINED)
    determined = reps - n_undet
    if reps == 0 or n_undet > MAX_UNDETERMINED_FRACTION * reps:
        raise UndeterminedRateError(
            f"{n_undet} of {reps} replications did not settle on an equilibrium; "
            "increase the horizon N"
        )
    p_hat = n_plus / determined
    lo, hi = wilson_interval(n_plus, determined)
    return SelectionEstimate(p_hat, reps, lo, hi, n_undet, n_plus, determined - n_plus)


def selection_probability(theta0: float, cfg: LearnConfig, reps: int = 200, base_seed: int = 0,
                          workers: Optional[int] = None) -> SelectionEstimate:
    """Fraction of finite-batch runs from ``theta0`` that settle on theta_plus."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if cfg.regime().kind is not RegimeKind.HIGH_FIDELITY:
        raise ValueError("selection probability is only meaningful in the high-fidelity regime")
    trajs = run_replications(theta0, cfg, reps, base_seed, _cell_label("selection", theta0, cfg), workers)
    return summarize_limits([t.limit for t in trajs])


@dataclass(frozen=True)
class LockinRecord:
    b: int
    theta0_above: float
    mis_above: float
    mis_above_ci: tuple
    theta0_below: float
    p_plus_below: float
    p_plus_below_ci: tuple
    above: SelectionEstimate = field(repr=False, default=None)
    below: SelectionEstimate = field(repr=False, default=None)


def lockin_curve(delta: float, cfg: LearnConfig, b_grid: Sequence[int], reps: int = 200,
                 seed: int = 0, workers: Optional[int] = None) -> List[LockinRecord]:
    """Wrong-basin selection rates from ``theta_minus +/- delta`` for each batch size."""
    regime = cfg.regime()
    if regime.kind is not RegimeKind.HIGH_FIDELITY:
        raise ValueError("lock-in needs the high-fidelity regime")
    above, below = regime.theta_minus + delta, regime.theta_minus - delta
    if not (0.0 < below and above < 1.0):
        raise ValueError(f"delta={delta} pushes a start point outside (0, 1)")
    out = []
    for b in b_grid:
        c = cfg.replace(batch_size=int(b))
        est_a = selection_probability(above, c, reps, seed, workers)
        est_b = selection_probability(below, c, reps, seed, workers)
        out.append(LockinRecord(
            b=int(b),
            theta0_above=above,
            mis_above=1.0 - est_a.p_plus_hat,
            mis_above_ci=(1.0 - est_a.ci_high, 1.0 - est_a.ci_low),
            theta0_below=below,
            p_plus_below=est_b.p_plus_hat,
            p_plus_below_ci=(est_b.ci_low, est_b.ci_high),
            above=est_a,
            below=est_b,
        ))
    return out


@dataclass(frozen=True)
class WidthRecord:
    b: int
    width: float
    lower: float
    upper: float
    below_resolution: bool
    truncated: bool
    theta0: tuple
    p_plus: tuple


def _crossings(theta0: np.ndarray, p: np.ndarray, epsilon: float):
    """Interpolated first rise above epsilon and last point below 1 - epsilon."""
    above = np.nonzero(p > epsilon)[0]
    below = np.nonzero(p < 1.0 - epsilon)[0]
    truncated = False
    if len(above) == 0:
        return None, None, False
    i = above[0]
    if i == 0:
        lower, truncated = theta0[0], True
    else:
        t0, t1, p0, p1 = theta0[i - 1], theta0[i], p[i - 1], p[i]
        lower = t0 + (epsilon - p0) / (p1 - p0) * (t1 - t0)
    if len(below) == 0:
        return lower, lower, truncated
    j = below[-1]
    if j == len(p) - 1:
        upper, truncated = theta0[-1], True
    else:
        t0, t1, p0, p1 = theta0[j], theta0[j + 1], p[j], p[j + 1]
        target = 1.0 - epsilon
        upper = t0 + (target - p0) / (p1 - p0) * (t1 - t0)
    return lower, upper, truncated


def transition_width(cfg: LearnConfig, b_grid: Sequence[int], resolution: float = 0.005,
                     epsilon: float = 0.1, reps: int = 200, seed: int = 0, margin: int = 2,
                     workers: Optional[int] = None) -> List[WidthRecord]:
    """Width of the band of start points whose collusion probability is in (eps, 1 - eps).

    Starting from the grid point nearest theta_minus the scan grows outward
    until ``margin`` consecutive points on the low side have p <= eps and
    ``margin`` on the high side have p >= 1 - eps, or the grid ends.
    """
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 1/2)")
    regime = cfg.regime()
    if regime.kind is not RegimeKind.HIGH_FIDELITY:
        raise ValueError("transition width needs the high-fidelity regime")
    grid = np.round(np.arange(resolution, regime.theta_plus, resolution), 12)
    start = int(np.argmin(np.abs(grid - regime.theta_minus)))
    out = []
    for b in b_grid:
        c = cfg.replace(batch_size=int(b))
        cache = {}

        def p_at(i):
            if i not in cache:
                trajs = run_replications(grid[i], c, reps, seed, _cell_label("width", grid[i], c), workers)
                cache[i] = summarize_limits([t.limit for t in trajs]).p_plus_hat
            return cache[i]

        lo = start
        while lo > 0 and not all(p_at(k) <= epsilon for k in range(lo, min(lo + margin, len(grid)))):
            lo -= 1
        hi = start
        while hi < len(grid) - 1 and not all(p_at(k) >= 1 - epsilon for k in range(max(hi - margin + 1, 0), hi + 1)):
            hi += 1
        idx = np.arange(lo, hi + 1)
        thetas = grid[idx]
        ps = np.array([p_at(k) for k in idx])
        lower, upper, truncated = _crossings(thetas, ps, epsilon)
        if lower is None:
            lower = upper = float(regime.theta_minus)
        width = max(0.0, upper - lower)
        below_res = width < resolution
        out.append(WidthRecord(int(b), resolution if below_res else float(width), float(lower), float(upper),
                               bool(below_res), bool(truncated), tuple(map(float, thetas)), tuple(map(float, ps))))
    return out


@dataclass(frozen=True)
class TrackingRecord:
    b: int
    n_steps: int
    median: float
    q25: float
    q75: float
    deviations: tuple = field(repr=False, default=())

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def _full_path(traj, n_steps: int) -> np.ndarray:
    """theta_0..theta_n_steps, holding the absorbed value after an early stop."""
    path = np.empty(n_steps + 1)
    k = len(traj.thetas)
    path[:k] = traj.thetas
    path[k:] = traj.thetas[-1]
    return path


def sup_deviation(theta0: float, cfg: LearnConfig, n_steps: int, rng: RngStream,
                  det_path: Optional[np.ndarray] = None) -> float:
    c = cfg.replace(horizon=n_steps, record_every=1)
    if det_path is None:
        det_path = _full_path(simulate_deterministic(theta0, c), n_steps)
    stoch = _full_path(simulate_stochastic(theta0, c, rng), n_steps)
    return float(np.max(np.abs(stoch - det_path)))


def tracking_error(cfg: LearnConfig, b_grid: Sequence[int], T: float = 20.0, reps: int = 100,
                   seed: int = 0, theta0: float = 0.5, workers: Optional[int] = None) -> List[TrackingRecord]:
    """Median over reps of the largest gap between finite- and infinite-batch paths up to time T."""
    n_steps = steps_for_time(T, cfg.alpha, cfg.eta)
    det = _full_path(simulate_deterministic(theta0, cfg.replace(horizon=n_steps, record_every=1)), n_steps)
    out = []
    for b in b_grid:
        c = cfg.replace(batch_size=int(b))
        label = _cell_label("tracking", theta0, c)

        def one(k):
            return sup_deviation(theta0, c, n_steps, RngStream(seed, stream_id_for(*label, k)), det)

        devs = np.array(parallel_map(one, range(int(reps)), workers))
        q25, med, q75 = np.quantile(devs, [0.25, 0.5, 0.75])
        out.append(TrackingRecord(int(b), n_steps, float(med), float(q25), float(q75), tuple(map(float, devs))))
    return out


@dataclass(frozen=True)
class SweepRecord:
    rho: float
    theta0: float
    regime: str
    theta_minus: Optional[float]
    theta_plus: Optional[float]
    limit: Optional[str] = None
    theta_final: Optional[float] = None
    p_plus_hat: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None


def phase_sweep(r: float, rho_grid: Sequence[float], theta0_grid: Sequence[float],
                cfg: Optional[LearnConfig] = None, stochastic: bool = False, reps: int = 200,
                seed: int = 0, workers: Optional[int] = None) -> List[SweepRecord]:
    """Limit (or collusion probability) for every ``(rho, theta0)`` cell.

    In stochastic mode cells outside the high-fidelity regime carry their
    deterministic limit, since no collusive equilibrium exists there.
    """
    game = GameParams(r)
    base = cfg if cfg is not None else LearnConfig(game=game)
    base = base.replace(game=game)
    for rho in rho_grid:
        if not (0.5 < rho <= 1.0):
            raise ValueError(f"rho grid value {rho} outside (1/2, 1]")
    for th in theta0_grid:
        if not (0.0 < th < 1.0):
            raise ValueError(f"theta0 grid value {th} outside (0, 1)")
    cells = [(float(rho), float(th)) for rho in rho_grid for th in theta0_grid]

    def run(cell):
        rho, th = cell
        c = base.replace(rho=rho)
        regime = c.regime()
        rec = dict(rho=rho, theta0=th, regime=regime.kind.value,
                   theta_minus=regime.theta_minus, theta_plus=regime.theta_plus)
        if stochastic and regime.kind is RegimeKind.HIGH_FIDELITY:
            est = summarize_limits([t.limit for t in run_replications(
                th, c, reps, seed, _cell_label("sweep", th, c), workers=1)])
            return SweepRecord(**rec, p_plus_hat=est.p_plus_hat, ci_low=est.ci_low, ci_high=est.ci_high)
        traj = simulate_deterministic(th, c)
        return SweepRecord(**rec, limit=traj.limit.value, theta_final=traj.theta_final)

    return parallel_map(run, cells, workers)
