"""Stratum membership and survivor average causal effects from draws.

Two SACE estimands are offered.  ``finite`` (default) imputes each unit's
stratum and its missing-arm outcomes per posterior draw and averages over the
sample's always-survivors.  ``super`` averages model-expected outcome
differences over all units, weighting each by its prior probability of being
an always-survivor through ``s``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, FirmRecord
from .likelihood import Posterior
from .model import BlockLayout, PriorSpec, outcome_linear_parts
from .sampler import PosteriorDraws
from .simulation import always_survivor_columns, always_survivor_outcome_means, sample_rows
from .strata import Stratum, StratumSequence

MODES = ("finite", "super")


def summarize(values: np.ndarray) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": float("nan"), "sd": float("nan"), "q05": float("nan"), "q95": float("nan")}
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "q05": float(np.quantile(v, 0.05)),
        "q95": float(np.quantile(v, 0.95)),
    }


@dataclass
class SaceEstimate:
    s: int
    t_prime: int
    mean: float
    sd: float
    q05: float
    q95: float
    per_draw: np.ndarray
    mode: str = "finite"
    n_skipped: int = 0

    def __post_init__(self):
        if self.t_prime > self.s:
            raise ValueError("t' must not exceed s")

    @property
    def label(self) -> str:
        return f"SACE_{{1:{self.s}}}({self.t_prime})" if self.s > 1 else "SACE_1(1)"

    def row(self) -> dict:
        return {
            "estimand": self.label,
            "s": self.s,
            "t_prime": self.t_prime,
            "mean": self.mean,
            "sd": self.sd,
            "q05": self.q05,
            "q95": self.q95,
            "mode": self.mode,
            "n_skipped": self.n_skipped,
        }


@dataclass
class StratumPosterior:
    labels: list[str]
    per_draw: np.ndarray  # (draws, G)
    mean: np.ndarray = field(init=False)
    sd: np.ndarray = field(init=False)
    q05: np.ndarray = field(init=False)
    q95: np.ndarray = field(init=False)

    def __post_init__(self):
        stats = [summarize(self.per_draw[:, g]) for g in range(self.per_draw.shape[1])]
        self.mean = np.array([s["mean"] for s in stats])
        self.sd = np.array([s["sd"] for s in stats])
        self.q05 = np.array([s["q05"] for s in stats])
        self.q95 = np.array([s["q95"] for s in stats])

    def rows(self) -> list[dict]:
        return [
            {"stratum": lab, "mean": float(m), "sd": float(s), "q05": float(a), "q95": float(b)}
            for lab, m, s, a, b in zip(self.labels, self.mean, self.sd, self.q05, self.q95)
        ]


def membership_responsibilities(record: FirmRecord, theta, layout: BlockLayout) -> dict[StratumSequence, float]:
    """P(G = g | unit's observed data) over the unit's compatible strata."""
    d = Dataset.from_records([record], layout.covariate_names, layout.T)
    post = Posterior(d, layout)
    r = post.responsibilities(theta)[0]
    return {seq: float(p) for seq, p in zip(post.seqs, r) if post._compat[0, post.seqs.index(seq)]}


def _posterior_for(d: Dataset, dr: PosteriorDraws) -> Posterior:
    layout = dr.layout or BlockLayout.for_dataset(d)
    return Posterior(d, layout, PriorSpec())


def _draw_indices(dr: PosteriorDraws, thin_to: int | None) -> np.ndarray:
    n = dr.n_draws * dr.n_chains
    if thin_to is None or thin_to >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, thin_to).round().astype(int))


def stratum_proportions(d: Dataset, dr: PosteriorDraws, thin_to: int | None = None) -> StratumPosterior:
    post = _posterior_for(d, dr)
    flat = dr.flat()
    idx = _draw_indices(dr, thin_to)
    props = np.empty((len(idx), len(post.seqs)))
    for k, j in enumerate(idx):
        props[k] = post.responsibilities(flat[j]).mean(axis=0)
    return StratumPosterior([str(s) for s in post.seqs], props)


class SaceComputer:
    """Per-draw SACE_{1:s}(t') for every 1 <= t' <= s <= T from one shared
    imputation, with the nesting of always-survivor sets checked each draw."""

    def __init__(self, d: Dataset, layout: BlockLayout, seed: int = 0):
        self.data = d
        self.layout = layout
        self.post = Posterior(d, layout, PriorSpec())
        self.seed = seed
        T = layout.T
        self.pairs = [(s, t) for s in range(1, T + 1) for t in range(1, s + 1)]
        self.as_cols = np.stack([always_survivor_columns(T, s) for s in range(1, T + 1)])  # (T, G)
        models = layout.outcome_models
        self._as_model = np.array(
            [[models.index(layout.outcome_model(w, (Stratum.AS,) * t)) for t in range(1, T + 1)] for w in (0, 1)]
        )
        self.nesting_checks = 0

    def _check_nesting(self, as_sets: np.ndarray) -> None:
        # as_sets: (T, N) membership of AS through s = 1..T
        for s in range(1, as_sets.shape[0]):
            if np.any(as_sets[s] & ~as_sets[s - 1]):
                raise AssertionError(f"always-survivor set through {s + 1} is not nested in the set through {s}")
        self.nesting_checks += 1

    def finite(self, theta, draw: int) -> np.ndarray:
        d, T = self.data, self.layout.T
        rng = np.random.default_rng([self.seed, draw])
        u_g = rng.uniform(size=d.N)
        u_y = rng.uniform(size=(d.N, T))
        r = self.post.responsibilities(theta)
        G = sample_rows(r, u_g)
        as_sets = self.as_cols[:, G]  # (T, N)
        self._check_nesting(as_sets)

        # missing-arm chain along the all-AS prefix
        b0, lag, xb = outcome_linear_parts(d.x, theta, self.layout)
        w_mis = 1 - d.w.astype(int)
        y_mis = np.zeros((d.N, T))
        prev = np.zeros(d.N)
        for t in range(T):
            m = self._as_model[w_mis, t]
            eta = b0[m] + xb[np.arange(d.N), m] + (lag[m] * prev if t else 0.0)
            y_mis[:, t] = u_y[:, t] < expit(eta)
            prev = y_mis[:, t]
        y_obs = np.where(d.y >= 0, d.y, 0).astype(float)
        y1 = np.where(d.w[:, None] == 1, y_obs, y_mis)
        y0 = np.where(d.w[:, None] == 0, y_obs, y_mis)
        out = np.full(len(self.pairs), np.nan)
        for k, (s, t) in enumerate(self.pairs):
            sel = as_sets[s - 1]
            if sel.any():
                out[k] = np.mean(y1[sel, t - 1] - y0[sel, t - 1])
        return out

    def super_population(self, theta, draw: int = 0) -> np.ndarray:
        d = self.data
        p = np.exp(self.post.sequence_log_probs(theta))
        m1 = always_survivor_outcome_means(d.x, theta, self.layout, 1)
        m0 = always_survivor_outcome_means(d.x, theta, self.layout, 0)
        out = np.full(len(self.pairs), np.nan)
        for k, (s, t) in enumerate(self.pairs):
            pi = p[:, self.as_cols[s - 1]].sum(axis=1)
            if pi.sum() > 0:
                out[k] = float(pi @ (m1[:, t - 1] - m0[:, t - 1]) / pi.sum())
        return out

    def per_draw(self, thetas, mode: str = "finite", draw_ids=None) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        fn = self.finite if mode == "finite" else self.super_population
        draw_ids = range(len(thetas)) if draw_ids is None else draw_ids
        return np.array([fn(th, int(j)) for th, j in zip(thetas, draw_ids)]).reshape(len(thetas), len(self.pairs))


def sace_table(
    d: Dataset, dr: PosteriorDraws, mode: str = "finite", seed: int = 0, thin_to: int | None = None
) -> dict[tuple[int, int], SaceEstimate]:
    """Every SACE_{1:s}(t') keyed by (s, t')."""
    layout = dr.layout or BlockLayout.for_dataset(d)
    comp = SaceComputer(d, layout, seed)
    idx = _draw_indices(dr, thin_to)
    vals = comp.per_draw(dr.flat()[idx], mode, idx)
    out = {}
    for k, (s, t) in enumerate(comp.pairs):
        v = vals[:, k]
        skipped = int(np.sum(~np.isfinite(v)))
        if skipped > 0.1 * len(v):
            warnings.warn(f"SACE_1:{s}({t}): {skipped} of {len(v)} draws had no always-survivors", stacklevel=2)
        out[(s, t)] = SaceEstimate(s, t, **summarize(v), per_draw=v, mode=mode, n_skipped=skipped)
    return out


def impute_and_sace(
    d: Dataset, dr: PosteriorDraws, s: int, t_prime: int, mode: str = "finite", seed: int = 0, thin_to: int | None = None
) -> SaceEstimate:
    T = (dr.layout or BlockLayout.for_dataset(d)).T
    if not 1 <= t_prime <= s <= T:
        raise ValueError(f"need 1 <= t' <= s <= T, got s={s}, t'={t_prime}")
    return sace_table(d, dr, mode, seed, thin_to)[(s, t_prime)]


def sace_trajectory(
    d: Dataset, dr: PosteriorDraws, s: int, mode: str = "finite", seed: int = 0, thin_to: int | None = None
) -> list[SaceEstimate]:
    table = sace_table(d, dr, mode, seed, thin_to)
    if (s, 1) not in table:
        raise ValueError(f"horizon s={s} outside 1..T")
    return [table[(s, t)] for t in range(1, s + 1)]
