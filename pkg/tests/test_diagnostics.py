import numpy as np
import pytest

from lpsace.diagnostics import diagnose, ess, rank_normalize, split_rhat


def test_iid_chains_rhat_near_one(rng):
    x = rng.standard_normal((1000, 4, 3))
    d = diagnose(x)
    assert np.all((d.rhat >= 0.99) & (d.rhat <= 1.02))
    assert np.all(d.ess > 2000)


def test_offset_chain_flags():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((500, 4, 1))
    x[:, 0] += 10
    assert diagnose(x).rhat[0] > 1.5


def test_constant_chain():
    x = np.ones((200, 4, 1))
    with pytest.warns(UserWarning, match="constant"):
        d = diagnose(x)
    assert d.ess[0] == pytest.approx(1.0)
    assert any("constant" in w for w in d.warnings)


def test_single_chain():
    x = np.random.default_rng(2).standard_normal((400, 1, 2))
    with pytest.warns(UserWarning, match="single chain"):
        d = diagnose(x)
    assert np.all(np.isnan(d.rhat))
    assert np.all(np.isfinite(d.ess))
    assert any("single chain" in w for w in d.warnings)


def test_ess_tracks_ar1():
    # AR(1) with phi has integrated autocorrelation time (1+phi)/(1-phi)
    rng = np.random.default_rng(3)
    phi, n, C = 0.8, 20000, 4
    x = np.empty((C, n))
    x[:, 0] = rng.standard_normal(C)
    e = rng.standard_normal((C, n)) * np.sqrt(1 - phi**2)
    for i in range(1, n):
        x[:, i] = phi * x[:, i - 1] + e[:, i]
    expected = C * n * (1 - phi) / (1 + phi)
    assert ess(x) == pytest.approx(expected, rel=0.1)


def test_rank_normalize_is_monotone(rng):
    x = rng.exponential(size=(2, 50))
    z = rank_normalize(x)
    assert np.array_equal(np.argsort(x.ravel()), np.argsort(z.ravel()))
    assert abs(z.mean()) < 1e-10


def test_split_rhat_detects_trend():
    x = np.linspace(0, 10, 400)[None, :].repeat(2, 0)
    assert split_rhat(x) > 1.5


def test_rows_and_summary(rng):
    d = diagnose(rng.standard_normal((150, 2, 2)), ["a", "b"])
    assert [r["parameter"] for r in d.rows()] == ["a", "b"]
    assert set(d.summary()) == {"max_rhat", "min_ess", "warnings"}
