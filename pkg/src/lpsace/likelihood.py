"""Observed-data likelihood with the latent strata summed out.

Each unit's observed cell (arm, survival path) is compatible with a small set
of longitudinal strata.  The unit's likelihood is a finite mixture over that
set; the mixture is evaluated in log space for all units at once and the
gradient is assembled from the mixture responsibilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .data import Dataset, FirmRecord
from .model import BlockLayout, PriorSpec, grad_log_prior, log_prior, outcome_logit, sequence_log_prob
from .strata import ObservedCell, StratumSequence, compatible_strata, enumerate_sequences


def _lse_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp keeping dims; rows must contain a finite entry."""
    m = a.max(axis=1, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class UnitLikelihoodContext:
    record: FirmRecord
    compatible: tuple[StratumSequence, ...]
    alive_horizon: int

    @classmethod
    def from_record(cls, record: FirmRecord) -> UnitLikelihoodContext:
        cell = ObservedCell(record.w, tuple(record.s))
        return cls(record, compatible_strata(cell, monotone=True), cell.alive_horizon)


class Posterior:
    """Log posterior and gradient for one dataset under one layout.

    All dataset-dependent index structures are built once here; evaluation is
    a handful of dense array operations over (units x sequences).
    """

    def __init__(self, d: Dataset, layout: BlockLayout | None = None, prior: PriorSpec = PriorSpec()):
        layout = layout or BlockLayout.for_dataset(d)
        if (layout.T, layout.K) != (d.T, d.K):
            raise ValueError(f"layout (T={layout.T}, K={layout.K}) does not match data (T={d.T}, K={d.K})")
        self.data = d
        self.layout = layout
        self.prior = prior
        self.dim = layout.dim
        self.scales = layout.prior_scales(prior)
        self.seqs = enumerate_sequences(layout.T, True)
        T, K, G = layout.T, layout.K, len(self.seqs)
        blocks = layout.stratum_blocks
        nb = len(blocks)

        # Stratum side: every block is a softmax over at most 3 destinations,
        # laid out in an (nb, 3) grid with the baseline logit pinned to 0.
        self._nb = nb
        free_pos, base_pos, pad_pos, rows = [], [], [], []
        for j, b in enumerate(blocks):
            for k in range(3):
                pos = 3 * j + k
                if k < len(b.free):
                    free_pos.append(pos)
                    rows.append(np.arange(b.offset + k * (K + 1), b.offset + (k + 1) * (K + 1)))
                elif k == len(b.free):
                    base_pos.append(pos)
                else:
                    pad_pos.append(pos)
        self._free_pos = np.array(free_pos)
        self._base_pos = np.array(base_pos)
        self._pad_pos = np.array(pad_pos, dtype=int)
        self._delta_rows = np.stack(rows)  # (F, K+1) indices into theta
        self._multi = np.array([j for j, b in enumerate(blocks) if len(b.free) == 2], dtype=int)

        A = np.zeros((3 * nb, G))
        for g, seq in enumerate(self.seqs):
            for t in range(T):
                b = layout.block_for(seq.labels[:t])
                if b is None:
                    continue  # forced NS -> NS
                j = blocks.index(b)
                A[3 * j + b.destinations.index(seq.labels[t]), g] = 1.0
        self._A = A

        # Outcome side: one column per outcome model.
        models = layout.outcome_models
        M = len(models)
        Bm = np.zeros((M, G))
        for m, om in enumerate(models):
            for g, seq in enumerate(self.seqs):
                if seq.prefix(om.t) == om.prefix:
                    Bm[m, g] = 1.0
        self._Bm = Bm
        self._b0_idx = np.array([om.intercept for om in models])
        self._lag_models = np.array([m for m, om in enumerate(models) if om.lag is not None], dtype=int)
        self._lag_idx = np.array([om.lag for om in models if om.lag is not None], dtype=int)
        if layout.shared_slopes:
            self._slope_idx = np.arange(models[0].slopes.start, models[0].slopes.stop)
        else:
            self._slope_idx = np.stack([np.arange(om.slopes.start, om.slopes.stop) for om in models])

        # Data-dependent constants.  Units with identical (x, w, s, y) have
        # identical likelihood terms, so they are collapsed into weighted rows.
        self.N = d.N
        key = np.hstack([d.x, d.w[:, None], d.s, d.y]) if d.N else np.zeros((0, K + 1 + 2 * T))
        uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        self._inv = inv.reshape(-1)
        self._wts = counts.astype(float)
        n = len(uniq)
        self._n = n
        X = uniq[:, :K]
        uw = uniq[:, K].astype(int)
        us = uniq[:, K + 1 : K + 1 + T].astype(int)
        uy = uniq[:, K + 1 + T :]
        H = us.sum(axis=1)
        self._X = X
        self._Xt = np.hstack([np.ones((n, 1)), X])
        t_m = np.array([om.t for om in models])
        w_m = np.array([om.w for om in models])
        valid = (uw[:, None] == w_m[None, :]) & (H[:, None] >= t_m[None, :])
        y_m = np.where(valid, uy[:, t_m - 1], 0.0)
        prev_col = np.maximum(t_m - 2, 0)
        yprev = np.where(valid & (t_m[None, :] >= 2), uy[:, prev_col], 0.0)
        self._valid = valid.astype(float)
        self._y_m = y_m
        self._yprev = yprev

        compat = np.zeros((n, G), dtype=bool)
        for w in (0, 1):
            for h in range(T + 1):
                rows_i = (uw == w) & (H == h)
                if not rows_i.any():
                    continue
                cell = ObservedCell(w, (1,) * h + (0,) * (T - h))
                cols = [self.seqs.index(s) for s in compatible_strata(cell, True)]
                compat[np.ix_(rows_i, cols)] = True
        self._compat = compat
        self._neg_inf_mask = np.where(compat, 0.0, -np.inf)

    # internal pieces

    def _stratum_logprobs(self, theta):
        """(n, 3*nb) log transition probabilities; pad columns hold 0."""
        n, nb = self._n, self._nb
        Z = self._Xt @ theta[self._delta_rows].T  # (n, F)
        L = np.zeros((n, 3 * nb))
        L[:, self._free_pos] = Z
        # lse over {0, z1[, z2]} per block; pads are excluded by construction
        lse = np.logaddexp(0.0, L[:, 0::3])
        multi = self._multi
        lse[:, multi] = np.logaddexp(lse[:, multi], L[:, 3 * multi + 1])
        L -= np.repeat(lse, 3, axis=1)
        L[:, self._pad_pos] = 0.0
        return L

    def _outcome_eta(self, theta):
        eta = np.repeat(theta[self._b0_idx][None, :], self._n, axis=0)
        if len(self._lag_models):
            eta[:, self._lag_models] += theta[self._lag_idx][None, :] * self._yprev[:, self._lag_models]
        if self.layout.K:
            if self.layout.shared_slopes:
                eta += (self._X @ theta[self._slope_idx])[:, None]
            else:
                eta += self._X @ theta[self._slope_idx].T
        return eta

    def _joint(self, theta):
        LP = self._stratum_logprobs(theta)
        eta = self._outcome_eta(theta)
        O = self._valid * (self._y_m * eta - np.logaddexp(0.0, eta))
        ell = LP @ self._A + O @ self._Bm + self._neg_inf_mask
        return LP, eta, ell

    # public API

    def unit_log_likelihoods(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.N == 0:
            return np.zeros(0)
        _, _, ell = self._joint(theta)
        return _lse_rows(ell)[:, 0][self._inv]

    def responsibilities(self, theta) -> np.ndarray:
        """(N, G) posterior stratum probabilities given each unit's data."""
        theta = np.asarray(theta, dtype=float)
        if self.N == 0:
            return np.zeros((0, len(self.seqs)))
        _, _, ell = self._joint(theta)
        return np.exp(ell - _lse_rows(ell))[self._inv]

    def sequence_log_probs(self, theta) -> np.ndarray:
        """(N, G) log P(G_i = g | x_i), ignoring survival and outcomes."""
        if self.N == 0:
            return np.zeros((0, len(self.seqs)))
        LP = self._stratum_logprobs(np.asarray(theta, dtype=float))
        return (LP @ self._A)[self._inv]

    def log_likelihood(self, theta) -> float:
        if self.N == 0:
            return 0.0
        _, _, ell = self._joint(np.asarray(theta, dtype=float))
        return float(self._wts @ _lse_rows(ell)[:, 0])

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return log_prior(theta, self.layout, self.prior) + self.log_likelihood(theta)

    def log_density_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        lp = log_prior(theta, self.layout, self.prior)
        grad = grad_log_prior(theta, self.layout, self.prior)
        if self.N == 0:
            return lp, grad
        LP, eta, ell = self._joint(theta)
        lse = _lse_rows(ell)
        r = np.exp(ell - lse) * self._wts[:, None]

        # softmax blocks: d/dz_k sum_d W_d log p_d = W_k - (sum_d W_d) p_k
        n, nb = self._n, self._nb
        Wd = (r @ self._A.T).reshape(n, nb, 3)
        P = np.exp(LP)
        P[:, self._pad_pos] = 0.0
        P = P.reshape(n, nb, 3)
        GZ = (Wd - Wd.sum(axis=2, keepdims=True) * P).reshape(n, -1)[:, self._free_pos]
        np.add.at(grad, self._delta_rows, GZ.T @ self._Xt)

        omega = (r @ self._Bm.T) * self._valid
        resid = omega * (self._y_m - expit(eta))
        grad[self._b0_idx] += resid.sum(axis=0)
        if len(self._lag_models):
            grad[self._lag_idx] += (resid[:, self._lag_models] * self._yprev[:, self._lag_models]).sum(axis=0)
        if self.layout.K:
            if self.layout.shared_slopes:
                grad[self._slope_idx] += self._X.T @ resid.sum(axis=1)
            else:
                np.add.at(grad, self._slope_idx, resid.T @ self._X)
        return lp + float(self._wts @ lse[:, 0]), grad

    def grad(self, theta) -> np.ndarray:
        return self.log_density_and_grad(theta)[1]


def unit_log_likelihood(ctx: UnitLikelihoodContext, theta, layout: BlockLayout) -> float:
    """Scalar evaluation of one unit's mixture over ``ctx.compatible``."""
    r = ctx.record
    terms = []
    for seq in ctx.compatible:
        lp = sequence_log_prob(seq, r.x, theta, layout)
        for t in range(1, ctx.alive_horizon + 1):
            prev = r.y[t - 2] if t >= 2 else None
            eta = outcome_logit(t, r.w, seq, prev, r.x, theta, layout)
            lp += -np.logaddexp(0.0, -eta) if r.y[t - 1] == 1 else -np.logaddexp(0.0, eta)
        terms.append(lp)
    return float(logsumexp(terms))


def log_posterior(d: Dataset, theta, prior: PriorSpec = PriorSpec(), layout: BlockLayout | None = None) -> float:
    return Posterior(d, layout, prior).log_density(theta)


def grad_log_posterior(d: Dataset, theta, prior: PriorSpec = PriorSpec(), layout: BlockLayout | None = None) -> np.ndarray:
    return Posterior(d, layout, prior).grad(theta)
