import numpy as np
import pytest

from conftest import random_dataset
from lpsace.data import TRUNCATED, Dataset, FirmRecord, observed_cell_proportions
from lpsace.estimands import (
    SaceComputer,
    SaceEstimate,
    StratumPosterior,
    impute_and_sace,
    membership_responsibilities,
    sace_table,
    sace_trajectory,
    stratum_proportions,
    summarize,
)
from lpsace.likelihood import Posterior
from lpsace.model import BlockLayout
from lpsace.sampler import PosteriorDraws
from lpsace.scenarios import null_spec, recovery_spec
from lpsace.simulation import simulate_dataset
from lpsace.strata import StratumSequence

T_ = TRUNCATED
LAY = BlockLayout(3, 2)


def fixed_draws(theta, n, layout):
    """Posterior draws that sit at one parameter value."""
    d = np.broadcast_to(theta, (n, 1, len(theta))).copy()
    return PosteriorDraws(d, np.ones(1), np.ones(1), layout)


def test_singleton_responsibility(rng):
    rec = FirmRecord("a", (0.2, 1.0), 0, (1, 1, 1), (0, 1, 1))
    r = membership_responsibilities(rec, rng.normal(size=LAY.dim), LAY)
    assert r == {StratumSequence.parse("AS.AS.AS"): 1.0}


def test_hand_responsibilities_at_zero():
    rec = FirmRecord("a", (0.0, 0.0), 1, (1, 1, 1), (1, 1, 1))
    r = membership_responsibilities(rec, LAY.zeros(), LAY)
    w = {"AS.AS.AS": 1 / 27, "AS.AS.CS": 1 / 27, "AS.CS.CS": 1 / 18, "CS.CS.CS": 1 / 12}
    z = sum(w.values())
    assert {str(k): v for k, v in r.items()} == pytest.approx({k: v / z for k, v in w.items()}, abs=1e-14)


def test_responsibilities_normalized(rng):
    d = random_dataset(rng, N=1000, K=2)
    post = Posterior(d)
    for _ in range(5):
        r = post.responsibilities(rng.normal(size=post.dim) * 2)
        assert np.allclose(r.sum(axis=1), 1, atol=1e-12)
        assert np.all(r[~post._compat[post._inv]] == 0)


def test_proportions_on_singleton_cells(rng):
    recs = [FirmRecord(f"a{i}", (0.0, 1.0), 0, (1, 1, 1), (1, 0, 1)) for i in range(3)]
    recs += [FirmRecord(f"b{i}", (1.0, 0.0), 1, (0, 0, 0), (T_, T_, T_)) for i in range(5)]
    d = Dataset.from_records(recs)
    dr = PosteriorDraws(rng.normal(size=(20, 2, LAY.dim)), np.ones(2), np.ones(2), LAY)
    sp = stratum_proportions(d, dr)
    got = dict(zip(sp.labels, sp.mean))
    assert got["AS.AS.AS"] == pytest.approx(3 / 8) and got["NS.NS.NS"] == pytest.approx(5 / 8)
    assert np.all(sp.sd == 0)
    cells = observed_cell_proportions(d)
    # cell shares are within-arm
    assert cells[(0, (1, 1, 1))] == 1.0 and cells[(1, (0, 0, 0))] == 1.0


def test_stratum_table_shape(rng):
    d = random_dataset(rng, N=80, K=2)
    dr = PosteriorDraws(rng.normal(size=(15, 2, LAY.dim)) * 0.3, np.ones(2), np.ones(2), LAY)
    sp = stratum_proportions(d, dr, thin_to=10)
    assert sp.per_draw.shape == (10, 10)
    assert np.allclose(sp.per_draw.sum(axis=1), 1, atol=1e-12)
    assert [set(r) for r in sp.rows()] == [{"stratum", "mean", "sd", "q05", "q95"}] * 10


def test_summarize():
    s = summarize(np.array([0.0, 1.0, np.nan]))
    assert s["mean"] == 0.5 and s["sd"] == pytest.approx(np.sqrt(0.5))
    assert np.isnan(summarize(np.array([np.nan]))["mean"])
    with pytest.raises(ValueError):
        SaceEstimate(1, 2, 0, 0, 0, 0, np.zeros(1))


def test_labels():
    assert SaceEstimate(1, 1, 0, 0, 0, 0, np.zeros(1)).label == "SACE_1(1)"
    assert SaceEstimate(3, 2, 0, 0, 0, 0, np.zeros(1)).label == "SACE_{1:3}(2)"


def test_nesting_is_checked_each_draw(rng):
    d = random_dataset(rng, N=300, K=2)
    comp = SaceComputer(d, LAY, seed=4)
    thetas = rng.normal(size=(25, LAY.dim))
    v = comp.per_draw(thetas)
    assert v.shape == (25, 6) and comp.nesting_checks == 25
    assert np.all(np.abs(v[np.isfinite(v)]) <= 1)
    bad = np.array([[True, False], [True, True], [False, False]])
    with pytest.raises(AssertionError):
        comp._check_nesting(bad)


def test_finite_mode_reproducible(rng):
    d = random_dataset(rng, N=100, K=2)
    th = rng.normal(size=LAY.dim)
    a = SaceComputer(d, LAY, seed=3).finite(th, 17)
    b = SaceComputer(d, LAY, seed=3).finite(th, 17)
    c = SaceComputer(d, LAY, seed=3).finite(th, 18)
    assert np.array_equal(a, b, equal_nan=True) and not np.array_equal(a, c, equal_nan=True)


@pytest.fixture(scope="module")
def null_world():
    g = null_spec(N=20000, seed=3)
    d, _ = simulate_dataset(g)
    return g, d


def test_symmetric_arms_null_over_imputations(null_world):
    g, d = null_world
    dr = fixed_draws(g.theta, 200, g.layout)
    tab = sace_table(d, dr, "finite", seed=1)
    for est in tab.values():
        assert abs(est.mean) < 0.03
    sup = sace_table(d, fixed_draws(g.theta, 2, g.layout), "super")
    for est in sup.values():
        assert est.mean == pytest.approx(0, abs=1e-12)


def test_finite_and_super_agree():
    g = recovery_spec(N=20000, seed=5)
    d, _ = simulate_dataset(g)
    fin = sace_table(d, fixed_draws(g.theta, 50, g.layout), "finite", seed=2)
    sup = sace_table(d, fixed_draws(g.theta, 1, g.layout), "super")
    for k in fin:
        assert fin[k].mean == pytest.approx(sup[k].mean, abs=0.03)


def test_no_effect_at_third_period():
    g = recovery_spec(N=20000, seed=6)
    lay = g.layout
    th = lay.set(g.theta, "beta0[w=1,AS.AS.AS]", -0.5)
    for w in (0, 1):
        th = lay.set(th, f"lambda[w={w},AS.AS.AS]", 0.0)
    g.theta = th
    d, _ = simulate_dataset(g)
    traj = sace_trajectory(d, fixed_draws(th, 100, lay), 3, seed=1)
    assert [e.t_prime for e in traj] == [1, 2, 3]
    assert abs(traj[2].mean) < 0.03
    assert traj[0].mean > 0.1


def test_trajectory_and_errors(rng):
    d = random_dataset(rng, N=60, K=2)
    dr = PosteriorDraws(rng.normal(size=(5, 2, LAY.dim)) * 0.3, np.ones(2), np.ones(2), LAY)
    assert len(sace_trajectory(d, dr, 2)) == 2
    est = impute_and_sace(d, dr, 3, 1, mode="super")
    assert est.mode == "super" and est.per_draw.shape == (10,)
    for s, t in ((2, 3), (4, 1), (0, 0)):
        with pytest.raises(ValueError):
            impute_and_sace(d, dr, s, t)
    with pytest.raises(ValueError):
        sace_table(d, dr, mode="bogus")


def test_skipped_draws_warn(rng):
    recs = [FirmRecord(f"b{i}", (0.0, 0.0), 1, (0, 0, 0), (T_, T_, T_)) for i in range(4)]
    d = Dataset.from_records(recs)
    dr = PosteriorDraws(rng.normal(size=(5, 1, LAY.dim)), np.ones(1), np.ones(1), LAY)
    with pytest.warns(UserWarning, match="no always-survivors"):
        tab = sace_table(d, dr)
    assert tab[(1, 1)].n_skipped == 5


def test_stratum_posterior_summaries():
    sp = StratumPosterior(["a", "b"], np.array([[0.2, 0.8], [0.4, 0.6]]))
    assert sp.mean == pytest.approx([0.3, 0.7])
