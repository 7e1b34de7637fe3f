import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duopoly_llm.estimator import (
    EstimatorConfig,
    batch_mean,
    batch_mean_arrays,
    expected_score,
    ipw_score,
    score_bound,
)
from duopoly_llm.llm import Mode, RoundOutcome, draw_rounds
from duopoly_llm.market import (
    Action,
    DegenerateConditioningError,
    GameParams,
    LlmParams,
    delta,
    marginal_p_high,
    payoffs,
)
from duopoly_llm.rng import RngStream

G = GameParams(1.5)
NO_CLIP = EstimatorConfig(0.0)


def test_config_validated():
    with pytest.raises(ValueError):
        EstimatorConfig(0.3)
    with pytest.raises(ValueError):
        EstimatorConfig(-1e-3)
    assert EstimatorConfig().epsilon_clip == 1e-3


@pytest.mark.parametrize("rho", [0.6, 0.85, 1.0])
def test_ipw_examples(rho):
    p = LlmParams(0.5, rho)
    assert ipw_score(Action.H, 3.0, p, NO_CLIP) == 6.0
    assert ipw_score(Action.L, 2.0, p, NO_CLIP) == -4.0


def test_degenerate_without_clipping():
    with pytest.raises(DegenerateConditioningError):
        ipw_score(Action.L, 2.0, LlmParams(1.0, 1.0), NO_CLIP)
    assert ipw_score(Action.L, 2.0, LlmParams(1.0, 1.0), EstimatorConfig(1e-3)) == pytest.approx(-2000.0)


def test_bound_example():
    bound = score_bound(0.85, G)
    assert bound == pytest.approx(3.5 / 0.15)
    for th in np.linspace(0, 1, 101):
        p = LlmParams(th, 0.85)
        for a, pi in itertools.product(Action, (1.5, 2.0, 3.0, 3.5)):
            assert abs(ipw_score(a, pi, p, NO_CLIP)) <= bound + 1e-12


@given(st.floats(0.51, 0.99), st.floats(0, 1), st.floats(1.01, 1.99))
def test_boundedness_property(rho, theta, r):
    g = GameParams(r)
    p = LlmParams(theta, rho)
    for a1, a2 in itertools.product(Action, Action):
        pi1, _ = payoffs(a1, a2, g)
        assert abs(ipw_score(a1, pi1, p, NO_CLIP)) <= score_bound(rho, g) * (1 + 1e-12)


def test_batch_mean_examples():
    p = LlmParams(0.5, 0.85)
    hh = RoundOutcome(Mode.H, Action.H, Action.H, 3.0, 3.0)
    ll = RoundOutcome(Mode.L, Action.L, Action.L, 2.0, 2.0)
    assert batch_mean([hh], p, NO_CLIP) == 6.0
    assert batch_mean([ll], p, NO_CLIP) == -4.0
    assert batch_mean([hh, ll], p, NO_CLIP) == 1.0
    with pytest.raises(ValueError):
        batch_mean([], p, NO_CLIP)


def test_exhaustive_unbiasedness_grid():
    worst = 0.0
    for th, rho, r in itertools.product(np.linspace(0.1, 0.9, 9), np.linspace(0.55, 0.95, 5),
                                         np.linspace(1.1, 1.9, 5)):
        p, g = LlmParams(th, rho), GameParams(r)
        worst = max(worst, abs(expected_score(p, g, NO_CLIP) - delta(p, g)))
    assert worst < 1e-10


def test_vectorised_batch_mean_matches_loop():
    p = LlmParams(0.42, 0.77)
    cfg = EstimatorConfig()
    _, h1, h2 = draw_rounds(p, 7 * 5, RngStream(4))
    vec = batch_mean_arrays(h1.reshape(7, 5), h2.reshape(7, 5), p, G, cfg)
    for k in range(7):
        batch = []
        for j in range(5):
            a1 = Action.H if h1[5 * k + j] else Action.L
            a2 = Action.H if h2[5 * k + j] else Action.L
            batch.append(RoundOutcome(Mode.H, a1, a2, *payoffs(a1, a2, G)))
        assert vec[k] == pytest.approx(batch_mean(batch, p, cfg), rel=1e-12)


def test_monte_carlo_mean_matches_delta():
    p = LlmParams(0.5, 0.85)
    n_batches, b = 10 ** 6, 4
    _, h1, h2 = draw_rounds(p, n_batches * b, RngStream(31))
    d = batch_mean_arrays(h1.reshape(n_batches, b), h2.reshape(n_batches, b), p, G, NO_CLIP)
    se = d.std(ddof=1) / np.sqrt(n_batches)
    assert abs(d.mean() - delta(p, G)) <= 4 * se
    assert delta(p, G) == pytest.approx(0.235)


def test_variance_scales_inverse_in_batch_size():
    p = LlmParams(0.5, 0.85)
    n_batches = 20_000
    rng = RngStream(8)

    def var_at(b):
        _, h1, h2 = draw_rounds(p, n_batches * b, rng)
        return batch_mean_arrays(h1.reshape(n_batches, b), h2.reshape(n_batches, b), p, G, NO_CLIP).var(ddof=1)

    v1 = var_at(1)
    for b in (4, 16, 64):
        ratio = var_at(b) / (v1 / b)
        assert 0.5 <= ratio <= 2.0


@pytest.mark.parametrize("rho", [0.6, 0.8, 0.95, 1.0])
def test_clipping_bias_only_when_binding(rho):
    cfg = EstimatorConfig(0.05)
    for th in np.linspace(0.0, 1.0, 201):
        p = LlmParams(th, rho)
        p_high = marginal_p_high(p)
        binding = min(p_high, 1 - p_high) < cfg.epsilon_clip
        if rho == 1.0 and th in (0.0, 1.0):
            continue
        if not binding:
            assert expected_score(p, G, cfg) == pytest.approx(delta(p, G), abs=1e-10)
        else:
            # a floor shrinks the clipped side's term: H-side clipping biases down, L-side up
            bias = expected_score(p, G, cfg) - delta(p, G)
            if p_high < cfg.epsilon_clip:
                assert bias < 0
            else:
                assert bias > 0
