import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from lpsace.model import (
    BlockLayout,
    PriorSpec,
    UndefinedOutcomeError,
    log_prior,
    outcome_prob,
    sequence_log_prob_matrix,
    sequence_prob,
    stratum_transition_probs,
)
from lpsace.strata import Stratum, StratumSequence, enumerate_sequences

AS, CS, NS = Stratum.AS, Stratum.CS, Stratum.NS
seq = StratumSequence.parse


@pytest.mark.parametrize("K", [0, 1, 4, 12])
def test_layout_dimension(K):
    lay = BlockLayout(3, K)
    assert len(lay.outcome_models) == 12
    assert sum(m.lag is not None for m in lay.outcome_models) == 9
    assert lay.n_stratum == 3 * 2 * (K + 1) + 3 * (K + 1)
    assert lay.dim == lay.n_stratum + 12 + 9 + K
    assert len(lay.names) == lay.dim == len(set(lay.names))
    multi = [b for b in lay.stratum_blocks if b.is_multinomial]
    assert len(multi) == 3 and len(lay.stratum_blocks) == 6


def test_per_model_slopes_layout():
    lay = BlockLayout(3, 2, shared_slopes=False)
    assert lay.dim == 27 + 12 + 9 + 24


def test_layout_json_round_trip():
    lay = BlockLayout(3, 2, ("a", "b"))
    assert BlockLayout.from_json(lay.to_json()) == lay


@given(st.integers(1, 4), st.integers(0, 3), st.booleans(), st.integers(0, 2**32 - 1))
def test_pack_unpack_bit_exact(T, K, shared, seed):
    lay = BlockLayout(T, K, shared_slopes=shared)
    theta = np.random.default_rng(seed).normal(size=lay.dim) * 10
    back = lay.pack(lay.unpack(theta))
    assert back.tobytes() == theta.tobytes()


def test_uniform_transitions_at_zero():
    lay = BlockLayout(3, 2)
    x = np.array([0.3, -1.0])
    p = stratum_transition_probs((), x, lay.zeros(), lay)
    assert list(p) == [AS, CS, NS]
    assert np.allclose(list(p.values()), 1 / 3)
    p = stratum_transition_probs((CS,), x, lay.zeros(), lay)
    assert list(p) == [CS, NS] and np.allclose(list(p.values()), 0.5)
    assert stratum_transition_probs((NS,), x, lay.zeros(), lay) == {NS: 1.0}
    assert stratum_transition_probs((AS, NS), x, lay.zeros(), lay) == {NS: 1.0}


def test_softmax_hand_value():
    lay = BlockLayout(3, 2)
    theta = lay.set(lay.zeros(), "delta[AS|AS][const]", 1.0)
    p = stratum_transition_probs((AS,), [1.0, 0.0], theta, lay)
    e = math.e
    hand = (e / (e + 2), 1 / (e + 2), 1 / (e + 2))
    assert np.allclose(list(p.values()), hand, atol=0)
    assert np.allclose(list(p.values()), (0.5761, 0.2119, 0.2119), atol=5e-5)


def test_transition_errors():
    lay = BlockLayout(3, 2)
    with pytest.raises(ValueError):
        stratum_transition_probs((CS, AS), [0, 0], lay.zeros(), lay)
    with pytest.raises(ValueError):
        stratum_transition_probs((), [0, 0, 0], lay.zeros(), lay)
    with pytest.raises(ValueError):
        stratum_transition_probs((AS, AS, AS), [0, 0], lay.zeros(), lay)


@pytest.mark.parametrize("s, p", [("NS.NS.NS", 1 / 3), ("AS.AS.AS", 1 / 27), ("CS.CS.NS", 1 / 12)])
def test_sequence_prob_at_zero(s, p):
    lay = BlockLayout(3, 3)
    assert sequence_prob(seq(s), [1, 2, 3], lay.zeros(), lay) == pytest.approx(p, rel=1e-14)


def test_sequence_prob_rejects_ds():
    lay = BlockLayout(3, 1)
    with pytest.raises(ValueError):
        sequence_prob(StratumSequence.parse("AS.DS.DS", monotone=False), [0], lay.zeros(), lay)


def test_sequence_probs_normalize(rng):
    for T, K in [(3, 3), (2, 1), (4, 2)]:
        lay = BlockLayout(T, K)
        for _ in range(20):
            theta = rng.normal(size=lay.dim) * 3
            x = rng.normal(size=K)
            total = math.fsum(sequence_prob(s, x, theta, lay) for s in enumerate_sequences(T, True))
            assert abs(total - 1) < 1e-12


def test_vectorized_sequence_probs_match_scalar(rng):
    lay = BlockLayout(3, 2)
    theta = rng.normal(size=lay.dim)
    X = rng.normal(size=(5, 2))
    M = sequence_log_prob_matrix(X, theta, lay)
    for i in range(5):
        for g, s in enumerate(enumerate_sequences(3, True)):
            assert M[i, g] == pytest.approx(math.log(sequence_prob(s, X[i], theta, lay)), abs=1e-12)


def test_softmax_shift_invariance(rng):
    """Adding the same offset to every destination's logit leaves probabilities
    unchanged; with NS pinned at zero this means the baseline choice is free."""
    lay = BlockLayout(3, 2)
    theta = rng.normal(size=lay.dim)
    x = rng.normal(size=2)
    p = stratum_transition_probs((AS,), x, theta, lay)
    # moving the baseline: subtract the AS logit from every destination
    b = lay.block_for((AS,))
    coef = theta[b.offset : b.offset + b.size].reshape(2, 3)
    z = coef[:, 0] + coef[:, 1:] @ x
    logits = np.array([z[0], z[1], 0.0]) - z[0]
    alt = np.exp(logits) / np.exp(logits).sum()
    assert np.allclose(list(p.values()), alt, atol=1e-14)


def test_outcome_prob_examples():
    lay = BlockLayout(3, 2)
    assert outcome_prob(1, 1, seq("AS.AS.AS"), None, [4, -2], lay.zeros(), lay) == 0.5
    theta = lay.set(lay.zeros(), "beta0[w=1,AS.CS]", 0.3)
    theta = lay.set(theta, "lambda[w=1,AS.CS]", 0.7)
    p = outcome_prob(2, 1, seq("AS.CS.CS"), 1, [1, 1], theta, lay)
    assert p == pytest.approx(1 / (1 + math.exp(-1.0)), abs=1e-15)
    assert round(p, 4) == 0.7311
    with pytest.raises(UndefinedOutcomeError):
        outcome_prob(2, 0, seq("CS.CS.CS"), 1, [0, 0], lay.zeros(), lay)
    with pytest.raises(UndefinedOutcomeError):
        outcome_prob(3, 1, seq("AS.AS.NS"), 0, [0, 0], lay.zeros(), lay)
    with pytest.raises(ValueError):
        outcome_prob(2, 1, seq("AS.AS.AS"), None, [0, 0], lay.zeros(), lay)


def test_outcome_uses_prefix_only():
    lay = BlockLayout(3, 1)
    theta = np.random.default_rng(1).normal(size=lay.dim)
    a = outcome_prob(2, 1, seq("AS.AS.AS"), 1, [0.2], theta, lay)
    b = outcome_prob(2, 1, seq("AS.AS.NS"), 1, [0.2], theta, lay)
    assert a == b


@settings(max_examples=100)
@given(st.floats(-5, 5), st.floats(0.01, 3), st.integers(0, 2**32 - 1))
def test_outcome_monotone_in_intercept_and_lag(base, step, seed):
    lay = BlockLayout(3, 2)
    theta = np.random.default_rng(seed).normal(size=lay.dim)
    theta = lay.set(theta, "beta0[w=1,AS.AS.CS]", base)
    s = seq("AS.AS.CS")
    p0 = outcome_prob(3, 1, s, 1, [0.5, 0.5], theta, lay)
    p1 = outcome_prob(3, 1, s, 1, [0.5, 0.5], lay.set(theta, "beta0[w=1,AS.AS.CS]", base + step), lay)
    lam = theta[lay.names.index("lambda[w=1,AS.AS.CS]")]
    p2 = outcome_prob(3, 1, s, 1, [0.5, 0.5], lay.set(theta, "lambda[w=1,AS.AS.CS]", lam + step), lay)
    assert 0 < p0 < p1 < 1 and p0 < p2 < 1


def test_log_prior_examples(rng):
    one = BlockLayout(3, 2)
    theta = one.zeros()
    expected = one.n_stratum * -0.5 * math.log(2 * math.pi * 6.25) + (one.dim - one.n_stratum) * -0.5 * math.log(
        2 * math.pi * 4.0
    )
    assert log_prior(theta, one) == pytest.approx(expected, rel=1e-14)
    assert -0.5 * math.log(2 * math.pi * 6.25) == pytest.approx(norm.logpdf(0, 0, 2.5))
    doubled = PriorSpec(5.0, 4.0)
    assert log_prior(theta, one, doubled) - log_prior(theta, one) == pytest.approx(-one.dim * math.log(2))
    theta = rng.normal(size=one.dim)
    naive = 0.0
    for j, v in enumerate(theta):
        sc = 2.5 if j < one.n_stratum else 2.0
        naive += norm.logpdf(v, 0, sc)
    assert log_prior(theta, one) == pytest.approx(naive, rel=1e-12)


def test_prior_scales_positive():
    with pytest.raises(ValueError):
        PriorSpec(0.0, 1.0)
