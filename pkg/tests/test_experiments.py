import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duopoly_llm.dynamics import LearnConfig, LimitClass
from duopoly_llm.experiments import (
    UndeterminedRateError,
    _crossings,
    lockin_curve,
    parallel_map,
    phase_sweep,
    selection_probability,
    summarize_limits,
    tracking_error,
    transition_width,
    wilson_interval,
)

FAST = LearnConfig(rho=0.85, batch_size=64, horizon=20_000)


def test_wilson_examples():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4)
    assert hi == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    assert wilson_interval(0, 0) == (0.0, 1.0)


@given(st.integers(1, 500), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_parallel_map_preserves_order():
    assert parallel_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]
    assert parallel_map(lambda x: -x, [3], workers=8) == [-3]


def test_summarize_limits_counts():
    limits = [LimitClass.COLLUSIVE_PLUS] * 6 + [LimitClass.COMPETITIVE] * 3 + [LimitClass.UNDETERMINED]
    est = summarize_limits(limits)
    assert est.p_plus_hat == pytest.approx(6 / 9)
    assert (est.collusive_count, est.competitive_count, est.undetermined_count) == (6, 3, 1)
    assert est.determined == 9
    assert est.ci_low <= est.p_plus_hat <= est.ci_high


def test_summarize_limits_aborts_on_undetermined():
    limits = [LimitClass.COLLUSIVE_PLUS] * 7 + [LimitClass.UNDETERMINED] * 3
    with pytest.raises(UndeterminedRateError):
        summarize_limits(limits)
    with pytest.raises(UndeterminedRateError):
        summarize_limits([])


def test_selection_probability_reproducible_and_worker_invariant():
    a = selection_probability(0.5, FAST, reps=16, base_seed=3, workers=1)
    b = selection_probability(0.5, FAST, reps=16, base_seed=3, workers=4)
    assert a == b
    assert 0.0 <= a.p_plus_hat <= 1.0
    c = selection_probability(0.5, FAST, reps=16, base_seed=4, workers=1)
    assert a.replications == c.replications == 16


def test_selection_probability_requires_high_fidelity():
    with pytest.raises(ValueError):
        selection_probability(0.5, FAST.replace(rho=0.7), reps=4)
    with pytest.raises(ValueError):
        selection_probability(0.5, FAST, reps=0)


def test_crossings_interpolates():
    th = np.array([0.1, 0.2, 0.3, 0.4])
    p = np.array([0.0, 0.2, 0.8, 1.0])
    lower, upper, truncated = _crossings(th, p, 0.1)
    assert lower == pytest.approx(0.15)
    assert upper == pytest.approx(0.35)
    assert not truncated
    lower, upper, truncated = _crossings(th, np.array([0.5, 0.6, 0.7, 0.8]), 0.1)
    assert truncated and lower == 0.1 and upper == 0.4
    assert _crossings(th, np.zeros(4), 0.1) == (None, None, False)


def test_lockin_curve_shape():
    recs = lockin_curve(0.1, FAST, [16, 64], reps=10, seed=1)
    assert [r.b for r in recs] == [16, 64]
    for r in recs:
        assert r.theta0_above - r.theta0_below == pytest.approx(0.2)
        assert r.mis_above_ci[0] <= r.mis_above <= r.mis_above_ci[1]
    with pytest.raises(ValueError):
        lockin_curve(0.5, FAST, [4], reps=2)


def test_transition_width_small_run():
    (rec,) = transition_width(FAST.replace(horizon=5000), [64], resolution=0.05, reps=20, seed=2)
    assert rec.lower <= rec.upper
    assert rec.width >= 0.05 or rec.below_resolution
    assert len(rec.theta0) == len(rec.p_plus)
    assert all(0.0 <= p <= 1.0 for p in rec.p_plus)


def test_tracking_error_shrinks_with_batch():
    recs = tracking_error(FAST, [4, 256], T=5.0, reps=20, seed=5)
    assert recs[0].n_steps == recs[1].n_steps
    assert recs[0].median > recs[1].median
    assert all(r.q25 <= r.median <= r.q75 for r in recs)
    assert len(recs[0].deviations) == 20


def test_phase_sweep_deterministic_cells():
    recs = phase_sweep(1.5, [0.7, 0.85, 1.0], [0.1, 0.5], cfg=LearnConfig(horizon=20_000))
    by_cell = {(r.rho, r.theta0): r for r in recs}
    assert by_cell[(0.7, 0.5)].limit == "Competitive"
    assert by_cell[(0.7, 0.5)].theta_minus is None
    assert by_cell[(0.85, 0.5)].limit == "CollusivePlus"
    assert by_cell[(0.85, 0.1)].limit == "Competitive"
    assert by_cell[(1.0, 0.1)].limit == "FullCollusion"
    assert by_cell[(0.85, 0.5)].regime == "HighFidelity"


def test_phase_sweep_stochastic_and_validation():
    recs = phase_sweep(1.5, [0.7, 0.85], [0.5], cfg=FAST, stochastic=True, reps=8, seed=1)
    low, high = recs
    assert low.limit == "Competitive" and low.p_plus_hat is None
    assert high.limit is None and 0.0 <= high.p_plus_hat <= 1.0
    with pytest.raises(ValueError):
        phase_sweep(1.5, [0.4], [0.5])
    with pytest.raises(ValueError):
        phase_sweep(1.5, [0.8], [1.0])
