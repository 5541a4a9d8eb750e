"""Split-chain R-hat and effective sample size on rank-normalized draws."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata


def _split(chains: np.ndarray) -> np.ndarray:
    """(C, n) -> (2C, n // 2), dropping the middle draw when n is odd."""
    n = chains.shape[1]
    half = n // 2
    return np.concatenate([chains[:, :half], chains[:, n - half :]], axis=0)


def rank_normalize(chains: np.ndarray) -> np.ndarray:
    flat = chains.ravel()
    r = rankdata(flat, method="average")
    z = norm.ppf((r - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance of each row (biased estimator), via FFT."""
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return ac / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size of (C, n) draws using Geyer's monotone sequence."""
    C, n = chains.shape
    if n < 4:
        return float("nan")
    acov = _autocov(chains)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if C > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return 1.0
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum consecutive pairs while positive, then enforce monotone decrease
    pairs = rho[: 2 * ((n - 1) // 2)].reshape(-1, 2).sum(axis=1)
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else len(pairs)
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(C * n))
    return float(C * n / tau)


def split_rhat(chains: np.ndarray) -> float:
    C, n = chains.shape
    if C < 2:
        return float("nan")
    sp = _split(chains)
    m = sp.shape[1]
    W = sp.var(axis=1, ddof=1).mean()
    B = m * sp.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    return float(np.sqrt(((m - 1) / m * W + B / m) / W))


@dataclass
class Diagnostics:
    names: list[str]
    rhat: np.ndarray
    ess: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def max_rhat(self) -> float:
        r = self.rhat[np.isfinite(self.rhat)]
        return float(r.max()) if r.size else float("nan")

    @property
    def min_ess(self) -> float:
        return float(np.nanmin(self.ess)) if self.ess.size else float("nan")

    def rows(self) -> list[dict]:
        return [
            {"parameter": n, "rhat": float(r), "ess": float(e)} for n, r, e in zip(self.names, self.rhat, self.ess)
        ]

    def summary(self) -> dict:
        return {"max_rhat": self.max_rhat, "min_ess": self.min_ess, "warnings": list(self.warnings)}


def diagnose(draws: np.ndarray, names: list[str] | None = None) -> Diagnostics:
    """Per-coordinate diagnostics for draws shaped (iterations, chains, dim)."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    n, C, D = draws.shape
    names = names or [f"p{j}" for j in range(D)]
    notes = []
    if C < 2:
        notes.append("single chain: R-hat unavailable")
    if n < 100:
        notes.append(f"only {n} retained draws per chain; diagnostics are unreliable")
    rhat = np.empty(D)
    ess_ = np.empty(D)
    for j in range(D):
        x = draws[:, :, j].T  # (C, n)
        if np.ptp(x) == 0:
            rhat[j] = float("nan")
            ess_[j] = 1.0
            notes.append(f"{names[j]}: constant draws, ESS set to 1")
            continue
        z = rank_normalize(x)
        rhat[j] = split_rhat(z)
        ess_[j] = ess(_split(z))
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return Diagnostics(list(names), rhat, ess_, notes)
