"""Synthetic panels from known parameters, and brute-force oracles."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import TRUNCATED, Dataset
from .model import BlockLayout, outcome_linear_parts, sequence_log_prob_matrix
from .strata import Stratum, enumerate_sequences, survival_path

OVERLAP_EPS = 0.01


@dataclass
class GeneratorSpec:
    theta: np.ndarray
    layout: BlockLayout
    N: int = 2000
    covariate_probs: np.ndarray | None = None  # Bernoulli law, default 0.5 each
    design: np.ndarray | None = None  # fixed (N, K) design instead of a law
    assignment: np.ndarray | None = None  # logistic coefs, intercept first
    seed: int = 0

    def __post_init__(self):
        K = self.layout.K
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.layout.dim,):
            raise ValueError(f"theta has shape {self.theta.shape}, layout needs ({self.layout.dim},)")
        if self.covariate_probs is None:
            self.covariate_probs = np.full(K, 0.5)
        self.covariate_probs = np.asarray(self.covariate_probs, dtype=float)
        if self.covariate_probs.shape != (K,) or np.any((self.covariate_probs < 0) | (self.covariate_probs > 1)):
            raise ValueError("covariate_probs must be K probabilities")
        if self.design is not None:
            self.design = np.asarray(self.design, dtype=float).reshape(-1, K)
            self.N = len(self.design)
        if self.assignment is None:
            self.assignment = np.zeros(K + 1)
        self.assignment = np.asarray(self.assignment, dtype=float)
        if self.assignment.shape != (K + 1,):
            raise ValueError("assignment needs K+1 logistic coefficients")

    @property
    def T(self) -> int:
        return self.layout.T

    def draw_covariates(self, n: int, rng) -> np.ndarray:
        if self.design is not None:
            return self.design[rng.integers(0, len(self.design), n)]
        return (rng.uniform(size=(n, self.layout.K)) < self.covariate_probs).astype(float)

    def propensity(self, X) -> np.ndarray:
        e = expit(self.assignment[0] + X @ self.assignment[1:])
        if np.any((e < OVERLAP_EPS) | (e > 1 - OVERLAP_EPS)):
            raise ValueError(f"assignment law violates overlap: propensity outside [{OVERLAP_EPS}, {1 - OVERLAP_EPS}]")
        return e

    # JSON round trip

    def to_json(self) -> dict:
        return {
            "T": self.layout.T,
            "K": self.layout.K,
            "covariate_names": list(self.layout.covariate_names),
            "shared_slopes": self.layout.shared_slopes,
            "N": self.N,
            "seed": self.seed,
            "covariate_probs": self.covariate_probs.tolist(),
            "assignment": self.assignment.tolist(),
            "theta": dict(zip(self.layout.names, self.theta.tolist())),
        }

    @classmethod
    def from_json(cls, obj) -> GeneratorSpec:
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        K = obj.get("K", len(obj.get("covariate_probs", [])) or 4)
        names = tuple(obj.get("covariate_names") or [f"x{j + 1}" for j in range(K)])
        layout = BlockLayout(obj.get("T", 3), K, names, obj.get("shared_slopes", True))
        th = obj.get("theta", {})
        if isinstance(th, dict):
            unknown = set(th) - set(layout.names)
            if unknown:
                raise ValueError(f"unknown parameter names in spec: {sorted(unknown)}")
            theta = np.array([float(th.get(n, 0.0)) for n in layout.names])
        else:
            theta = np.asarray(th, dtype=float)
        design = obj.get("design")
        return cls(
            theta,
            layout,
            N=obj.get("N", 2000),
            covariate_probs=obj.get("covariate_probs"),
            design=None if design is None else np.asarray(design, dtype=float),
            assignment=obj.get("assignment"),
            seed=obj.get("seed", 0),
        )


@dataclass
class Truth:
    ids: tuple[str, ...]
    strata: np.ndarray  # index into enumerate_sequences(T, True)
    y0: np.ndarray  # (N, T), TRUNCATED where undefined
    y1: np.ndarray
    T: int = field(default=3)

    @property
    def labels(self) -> list[str]:
        seqs = enumerate_sequences(self.T, True)
        return [str(seqs[g]) for g in self.strata]

    def frequencies(self) -> dict[str, float]:
        seqs = enumerate_sequences(self.T, True)
        counts = np.bincount(self.strata, minlength=len(seqs))
        return {str(s): float(c) / len(self.strata) for s, c in zip(seqs, counts)}

    def dumps(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        T = self.T
        wr.writerow(["id", "G", *[f"y0_{t + 1}" for t in range(T)], *[f"y1_{t + 1}" for t in range(T)]])
        for i, lab in enumerate(self.labels):
            fmt = lambda v: "*" if v == TRUNCATED else str(int(v))  # noqa: E731
            wr.writerow([self.ids[i], lab, *map(fmt, self.y0[i]), *map(fmt, self.y1[i])])
        return buf.getvalue()


def draw_strata(X, theta, layout: BlockLayout, rng) -> np.ndarray:
    lp = sequence_log_prob_matrix(X, theta, layout)
    return sample_rows(np.exp(lp), rng.uniform(size=len(lp)))


def sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one column index per row."""
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    return np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)


def outcome_model_index(layout: BlockLayout) -> np.ndarray:
    """Outcome model index for (arm, sequence, period); -1 where undefined."""
    seqs = enumerate_sequences(layout.T, True)
    midx = np.full((2, len(seqs), layout.T), -1)
    for w in (0, 1):
        for g, seq in enumerate(seqs):
            for t in range(layout.T):
                m = layout.outcome_model(w, seq.prefix(t + 1))
                if m is not None:
                    midx[w, g, t] = layout.outcome_models.index(m)
    return midx


def draw_outcomes(X, strata, theta, layout: BlockLayout, rng) -> tuple[np.ndarray, np.ndarray]:
    """Both arms' outcome chains given strata; TRUNCATED where undefined."""
    n, T = len(strata), layout.T
    b0, lag, xb = outcome_linear_parts(X, theta, layout)
    midx = outcome_model_index(layout)
    ys = []
    for w in (0, 1):
        y = np.full((n, T), TRUNCATED, dtype=np.int8)
        prev = np.zeros(n)
        for t in range(T):
            u = rng.uniform(size=n)
            m = midx[w, strata, t]
            ok = m >= 0
            mm = np.where(ok, m, 0)
            eta = b0[mm] + lag[mm] * prev + xb[np.arange(n), mm]
            yt = (u < expit(eta)).astype(np.int8)
            y[ok, t] = yt[ok]
            prev = np.where(ok, yt, 0.0)
        ys.append(y)
    return ys[0], ys[1]


def survival_matrix(strata, w, T: int) -> np.ndarray:
    """(n, T) survival paths of the given strata under per-unit arms ``w``."""
    seqs = enumerate_sequences(T, True)
    table = np.array([[survival_path(s, a) for s in seqs] for a in (0, 1)], dtype=np.int8)
    return table[np.asarray(w, dtype=int), np.asarray(strata)]


def simulate_dataset(g: GeneratorSpec) -> tuple[Dataset, Truth]:
    rng = np.random.default_rng(g.seed)
    n, T = g.N, g.T
    X = g.design.copy() if g.design is not None else g.draw_covariates(n, rng)
    w = (rng.uniform(size=n) < g.propensity(X)).astype(np.int8)
    strata = draw_strata(X, g.theta, g.layout, rng)
    y0, y1 = draw_outcomes(X, strata, g.theta, g.layout, rng)
    s = survival_matrix(strata, w, T)
    y = np.where(w[:, None] == 1, y1, y0)
    width = len(str(n))
    ids = tuple(f"u{i + 1:0{width}d}" for i in range(n))
    d = Dataset(ids, X, w, s, y, g.layout.covariate_names)
    return d, Truth(ids, strata, y0, y1, T)


@dataclass
class OracleResult:
    value: float
    se: float
    n_as: int
    p_as: float


def always_survivor_columns(T: int, s: int) -> np.ndarray:
    return np.array([seq.always_survivor_through(s) for seq in enumerate_sequences(T, True)])


def oracle_sace(g: GeneratorSpec, s: int, t_prime: int, M: int = 1_000_000, seed: int | None = None, chunk: int = 250_000) -> OracleResult:
    """Monte Carlo SACE_{1:s}(t') from the generating parameters."""
    if not 1 <= t_prime <= s <= g.T:
        raise ValueError(f"need 1 <= t' <= s <= T, got s={s}, t'={t_prime}")
    rng = np.random.default_rng([g.seed if seed is None else seed, 7919])
    as_cols = np.where(always_survivor_columns(g.T, s))[0]
    total = total_sq = 0.0
    n_as = 0
    p_sum = 0.0
    done = 0
    while done < M:
        n = min(chunk, M - done)
        X = g.draw_covariates(n, rng)
        lp = sequence_log_prob_matrix(X, g.theta, g.layout)
        p_sum += np.exp(lp[:, as_cols]).sum()
        strata = sample_rows(np.exp(lp), rng.uniform(size=n))
        y0, y1 = draw_outcomes(X, strata, g.theta, g.layout, rng)
        sel = np.isin(strata, as_cols)
        diff = (y1[sel, t_prime - 1] - y0[sel, t_prime - 1]).astype(float)
        total += diff.sum()
        total_sq += (diff**2).sum()
        n_as += int(sel.sum())
        done += n
    p_as = p_sum / M
    if p_as < 1e-4 or n_as < 2:
        raise ValueError(f"stratum too rare for oracle: P(AS through {s}) = {p_as:.2e}")
    mean = total / n_as
    var = (total_sq - n_as * mean**2) / (n_as - 1)
    return OracleResult(mean, float(np.sqrt(var / n_as)), n_as, p_as)


def exact_sace(g: GeneratorSpec, s: int, t_prime: int) -> float:
    """SACE_{1:s}(t') by enumerating all 2^K binary covariate patterns.

    Only valid for the independent-Bernoulli covariate law.
    """
    if g.design is not None:
        raise ValueError("exact_sace needs the Bernoulli covariate law")
    K = g.layout.K
    pats = ((np.arange(2**K)[:, None] >> np.arange(K)) & 1).astype(float)
    px = np.prod(np.where(pats == 1, g.covariate_probs, 1 - g.covariate_probs), axis=1)
    lp = sequence_log_prob_matrix(pats, g.theta, g.layout)
    pi = np.exp(lp[:, always_survivor_columns(g.T, s)]).sum(axis=1)
    m1 = always_survivor_outcome_means(pats, g.theta, g.layout, 1)[:, t_prime - 1]
    m0 = always_survivor_outcome_means(pats, g.theta, g.layout, 0)[:, t_prime - 1]
    wts = px * pi
    return float(wts @ (m1 - m0) / wts.sum())


def always_survivor_outcome_means(X, theta, layout: BlockLayout, w: int) -> np.ndarray:
    """E[Y_t(w) | AS through t, x] for t = 1..T, by forward recursion."""
    b0, lag, xb = outcome_linear_parts(X, theta, layout)
    n = xb.shape[0]
    out = np.empty((n, layout.T))
    p = np.zeros(n)
    for t in range(layout.T):
        m = layout.outcome_models.index(layout.outcome_model(w, (Stratum.AS,) * (t + 1)))
        base = b0[m] + xb[:, m]
        p = p * expit(base + lag[m]) + (1 - p) * expit(base)
        out[:, t] = p
    return out
