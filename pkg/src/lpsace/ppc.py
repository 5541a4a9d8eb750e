"""Posterior predictive checks.

Replicated panels keep each unit's covariates and arm and redraw strata,
survival and outcomes from a posterior draw.  Two statistics are compared per
arm and period: the survival rate and the hiring rate among survivors.  A
separate table scores one-step predictions of the observed hiring decisions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .estimands import _draw_indices, _posterior_for
from .model import outcome_linear_parts
from .sampler import PosteriorDraws
from .simulation import draw_outcomes, draw_strata, outcome_model_index, survival_matrix

STATISTICS = ("survival", "hiring")


def panel_statistics(w, s, y, T: int) -> np.ndarray:
    """(statistic, arm, period) rates; NaN where a denominator is empty."""
    out = np.full((2, 2, T), np.nan)
    for arm in (0, 1):
        sel = w == arm
        if not sel.any():
            continue
        out[0, arm] = s[sel].mean(axis=0)
        alive = s[sel] == 1
        n_alive = alive.sum(axis=0)
        hired = ((y[sel] == 1) & alive).sum(axis=0)
        out[1, arm] = np.where(n_alive > 0, hired / np.maximum(n_alive, 1), np.nan)
    return out


def mid_p_value(rep: np.ndarray, obs: float) -> float:
    """P(T_rep > T_obs) + P(T_rep = T_obs) / 2 over finite replicates."""
    rep = rep[np.isfinite(rep)]
    if rep.size == 0 or not np.isfinite(obs):
        return float("nan")
    return float(np.mean(rep > obs) + 0.5 * np.mean(rep == obs))


def replicate(d: Dataset, theta, layout, rng) -> tuple[np.ndarray, np.ndarray]:
    """Survival and outcome matrices for one replicated panel."""
    strata = draw_strata(d.x, theta, layout, rng)
    y0, y1 = draw_outcomes(d.x, strata, theta, layout, rng)
    s = survival_matrix(strata, d.w, layout.T)
    return s, np.where(d.w[:, None] == 1, y1, y0)


def hiring_probabilities(d: Dataset, theta, post, midx) -> np.ndarray:
    """P(Y_t = 1 | x, w, survival path, observed y_{t-1}) for every unit and
    period, mixing over strata weighted by survival-only responsibilities.
    NaN where the unit is dead."""
    layout = post.layout
    lp = post.sequence_log_probs(theta)
    compat = post._compat[post._inv]
    r = np.where(compat, np.exp(lp), 0.0)
    r /= r.sum(axis=1, keepdims=True)
    b0, lag, xb = outcome_linear_parts(d.x, theta, layout)
    n = d.N
    out = np.full((n, layout.T), np.nan)
    rows = np.arange(n)
    for t in range(layout.T):
        alive = d.s[:, t] == 1
        prev = d.y[:, t - 1].astype(float) if t else np.zeros(n)
        prev = np.where(prev < 0, 0.0, prev)
        m = midx[d.w.astype(int), :, t]  # (n, G)
        ok = m >= 0
        mm = np.where(ok, m, 0)
        p = expit(b0[mm] + lag[mm] * prev[:, None] + xb[rows[:, None], mm])
        mix = (r * np.where(ok, p, 0.0)).sum(axis=1)
        out[alive, t] = mix[alive]
    return out


@dataclass
class PpcReport:
    T: int
    n_draws: int
    observed: np.ndarray  # (2, 2, T)
    replicated: np.ndarray  # (draws, 2, 2, T)
    p_values: np.ndarray  # (2, 2, T)
    prediction: list[dict] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for k, stat in enumerate(STATISTICS):
            for w in (0, 1):
                for t in range(self.T):
                    rep = self.replicated[:, k, w, t]
                    rep = rep[np.isfinite(rep)]
                    out.append(
                        {
                            "statistic": stat,
                            "w": w,
                            "t": t + 1,
                            "observed": float(self.observed[k, w, t]),
                            "replicated_mean": float(rep.mean()) if rep.size else float("nan"),
                            "replicated_q05": float(np.quantile(rep, 0.05)) if rep.size else float("nan"),
                            "replicated_q95": float(np.quantile(rep, 0.95)) if rep.size else float("nan"),
                            "p_value": float(self.p_values[k, w, t]),
                        }
                    )
        return out

    def calibrated_share(self, lo: float = 0.05, hi: float = 0.95) -> float:
        p = self.p_values[np.isfinite(self.p_values)]
        return float(np.mean((p >= lo) & (p <= hi))) if p.size else float("nan")

    def to_json(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "checks": self.rows(),
            "prediction": self.prediction,
            "calibrated_share": self.calibrated_share(),
        }


def _rate(num, den):
    return float(num / den) if den else float("nan")


def posterior_predictive(d: Dataset, dr: PosteriorDraws, thin_to: int = 200, seed: int = 0) -> PpcReport:
    post = _posterior_for(d, dr)
    layout = post.layout
    T = layout.T
    midx = outcome_model_index(layout)
    flat = dr.flat()
    idx = _draw_indices(dr, thin_to)
    obs = panel_statistics(d.w, d.s, d.y, T)
    rep = np.empty((len(idx), 2, 2, T))
    # confusion counts per (arm, period): tp, fp, tn, fn, summed over draws
    conf = np.zeros((2, T, 4))
    for k, j in enumerate(idx):
        rng = np.random.default_rng([seed, int(j)])
        s_rep, y_rep = replicate(d, flat[j], layout, rng)
        rep[k] = panel_statistics(d.w, s_rep, y_rep, T)
        pred = hiring_probabilities(d, flat[j], post, midx) > 0.5
        for w in (0, 1):
            for t in range(T):
                sel = (d.w == w) & (d.s[:, t] == 1)
                yt = d.y[sel, t] == 1
                pt = pred[sel, t]
                conf[w, t] += [np.sum(pt & yt), np.sum(pt & ~yt), np.sum(~pt & ~yt), np.sum(~pt & yt)]
    pv = np.full((2, 2, T), np.nan)
    for a in range(2):
        for w in (0, 1):
            for t in range(T):
                pv[a, w, t] = mid_p_value(rep[:, a, w, t], obs[a, w, t])
    prediction = []
    for w in (0, 1):
        for t in range(T):
            tp, fp, tn, fn = conf[w, t]
            prediction.append(
                {
                    "w": w,
                    "t": t + 1,
                    "correct": _rate(tp + tn, tp + fp + tn + fn),
                    "sensitivity": _rate(tp, tp + fn),
                    "specificity": _rate(tn, tn + fp),
                }
            )
    return PpcReport(T, len(idx), obs, rep, pv, prediction)
