import csv

import numpy as np
import pytest

from duopoly_llm.llm import Mode, RoundOutcome, draw_rounds, sample_batch, sample_round, write_round_trace
from duopoly_llm.market import Action, GameParams, LlmParams, joint_probs, marginal_p_high, payoffs
from duopoly_llm.rng import RngStream, stream_id_for

G = GameParams(1.5)


def test_stream_determinism():
    a = RngStream(7, 3).uniform(1000)
    b = RngStream(7, 3).uniform(1000)
    c = RngStream(7, 4).uniform(1000)
    d = RngStream(8, 3).uniform(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_blocks_concatenate():
    s1, s2 = RngStream(1, 9), RngStream(1, 9)
    whole = s1.uniform((10, 4, 3))
    parts = np.concatenate([s2.uniform((1, 4, 3)) for _ in range(10)])
    assert np.array_equal(whole, parts)


def test_stream_ids_stable_and_distinct():
    assert stream_id_for("selection", 0) == stream_id_for("selection", 0)
    ids = {stream_id_for("selection", k) for k in range(1000)}
    assert len(ids) == 1000
    assert all(0 <= i < 2 ** 64 for i in ids)


def test_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 2 ** 64)


def test_degenerate_rounds():
    rng = RngStream(0)
    for o in sample_batch(LlmParams(1.0, 1.0), G, 64, rng):
        assert o == RoundOutcome(Mode.H, Action.H, Action.H, 3.0, 3.0)
    for _ in range(50):
        assert sample_round(LlmParams(0.0, 1.0), G, rng) == RoundOutcome(Mode.L, Action.L, Action.L, 2.0, 2.0)


def test_round_payoffs_follow_table():
    rng = RngStream(5)
    for o in sample_batch(LlmParams(0.4, 0.7), G, 500, rng):
        assert (o.payoff1, o.payoff2) == payoffs(o.rec1, o.rec2, G)


def test_batch_size_validated():
    with pytest.raises(ValueError):
        sample_batch(LlmParams(0.5, 0.8), G, 0, RngStream(0))


def test_identical_streams_identical_outcomes():
    p = LlmParams(0.37, 0.82)
    a = sample_batch(p, G, 200, RngStream(11, 2))
    b = sample_batch(p, G, 200, RngStream(11, 2))
    assert a == b


def test_joint_frequencies_match_closed_form():
    p = LlmParams(0.5, 0.85)
    n = 10 ** 6
    _, h1, h2 = draw_rounds(p, n, RngStream(2024))
    freq = np.array([np.mean(h1 & h2), np.mean(h1 & ~h2), np.mean(~h1 & h2), np.mean(~h1 & ~h2)])
    expected = np.array(joint_probs(p).as_tuple())
    se = np.sqrt(expected * (1 - expected) / n)
    assert np.all(np.abs(freq - expected) <= 4 * se)


def test_mode_marginal():
    n = 10 ** 6
    mode, _, _ = draw_rounds(LlmParams(0.3, 0.9), n, RngStream(99))
    se = np.sqrt(0.3 * 0.7 / n)
    assert abs(mode.mean() - 0.3) <= 4 * se


def test_conditional_independence_given_mode():
    rho = 0.8
    mode, h1, h2 = draw_rounds(LlmParams(0.6, rho), 10 ** 6, RngStream(3))
    for m in (True, False):
        sel = mode == m
        match1 = (h1[sel] == m).astype(float)
        match2 = (h2[sel] == m).astype(float)
        n = sel.sum()
        corr = np.corrcoef(match1, match2)[0, 1]
        # correlation of independent indicators has standard error ~ 1/sqrt(n)
        assert abs(corr) <= 4 / np.sqrt(n)
        assert abs(match1.mean() - rho) <= 4 * np.sqrt(rho * (1 - rho) / n)


def test_batch_h_frequency():
    p = LlmParams(0.3, 0.9)
    n_batches, b = 10 ** 5, 4
    _, h1, h2 = draw_rounds(p, n_batches * b, RngStream(17))
    per_batch = 0.5 * (h1.reshape(n_batches, b).mean(axis=1) + h2.reshape(n_batches, b).mean(axis=1))
    se = per_batch.std(ddof=1) / np.sqrt(n_batches)
    assert abs(per_batch.mean() - marginal_p_high(p)) <= 4 * se
    assert marginal_p_high(p) == pytest.approx(0.34)


def test_round_trace_csv(tmp_path):
    rounds = sample_batch(LlmParams(0.5, 0.9), G, 5, RngStream(1))
    path = tmp_path / "trace.csv"
    write_round_trace(path, rounds)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["round", "mode", "rec1", "rec2", "payoff1", "payoff2"]
    assert len(rows) == 6
    assert rows[1][0] == "0"
    assert rows[1][1] in ("HMode", "LMode")
    assert float(rows[1][4]) == rounds[0].payoff1
