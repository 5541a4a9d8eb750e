"""Hamiltonian Monte Carlo with a jittered fixed-length leapfrog.

Warmup tunes the step size by dual averaging toward ``target_accept`` and, in
its second half, estimates a diagonal inverse metric from the draws.  After
warmup both are frozen.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .diagnostics import Diagnostics, diagnose
from .likelihood import Posterior
from .model import BlockLayout, PriorSpec

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class HmcConfig:
    iterations: int = 2000
    warmup: int = 1000
    chains: int = 4
    leapfrog_steps: int = 32
    jitter: float = 0.2
    target_accept: float = 0.8
    seed: int = 0
    adapt_mass: bool = True
    init_radius: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 <= self.warmup < self.iterations:
            raise ValueError("need 0 <= warmup < iterations")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.leapfrog_steps < 1 or self.chains < 1:
            raise ValueError("leapfrog_steps and chains must be >= 1")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")

    @property
    def retained(self) -> int:
        return self.iterations - self.warmup


@dataclass
class PosteriorDraws:
    draws: np.ndarray  # (retained, chains, dim)
    accept_rates: np.ndarray
    step_sizes: np.ndarray
    layout: BlockLayout | None = None
    divergences: np.ndarray | None = None
    inv_metrics: np.ndarray | None = None
    config: HmcConfig | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def n_chains(self) -> int:
        return self.draws.shape[1]

    def flat(self) -> np.ndarray:
        """Draws as (retained * chains, dim), chain-major."""
        return np.swapaxes(self.draws, 0, 1).reshape(-1, self.draws.shape[2])

    def names(self) -> list[str]:
        if self.layout is not None:
            return self.layout.names
        return [f"p{j}" for j in range(self.draws.shape[2])]


class GaussianTarget:
    """Independent normal target for testing the sampler in isolation."""

    def __init__(self, mean, sd):
        self.mean = np.asarray(mean, dtype=float)
        self.sd = np.broadcast_to(np.asarray(sd, dtype=float), self.mean.shape).copy()
        self.dim = self.mean.size

    def log_density_and_grad(self, q):
        z = (q - self.mean) / self.sd
        return float(-0.5 * z @ z), -z / self.sd


def initialize(layout_or_dim, seed, radius: float = 1.0) -> np.ndarray:
    """Uniform draw in [-radius, radius] for every coordinate."""
    dim = layout_or_dim.dim if isinstance(layout_or_dim, BlockLayout) else int(layout_or_dim)
    return np.random.default_rng(seed).uniform(-radius, radius, dim)


def leapfrog(target, q, p, grad, eps, n_steps, inv_metric):
    q, p = q.copy(), p.copy()
    p += 0.5 * eps * grad
    for i in range(n_steps):
        q += eps * inv_metric * p
        logp, grad = target.log_density_and_grad(q)
        if not np.isfinite(logp):
            return q, p, logp, grad
        if i < n_steps - 1:
            p += eps * grad
    p += 0.5 * eps * grad
    return q, p, logp, grad


def hamiltonian(logp, p, inv_metric) -> float:
    return -logp + 0.5 * float(p @ (inv_metric * p))


class DualAveraging:
    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0
        self.log_eps = math.log(eps0)

    def update(self, accept_stat: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _reasonable_eps(target, q, logp, grad, inv_metric, rng) -> float:
    eps = 1.0
    p = rng.standard_normal(q.size) / np.sqrt(inv_metric)
    h0 = hamiltonian(logp, p, inv_metric)

    def log_ratio(e):
        _, p1, lp1, _ = leapfrog(target, q, p, grad, e, 1, inv_metric)
        h1 = hamiltonian(lp1, p1, inv_metric)
        return h0 - h1 if np.isfinite(h1) else -np.inf

    direction = 1 if log_ratio(eps) > math.log(0.5) else -1
    for _ in range(50):
        lr = log_ratio(eps)
        if direction == 1 and not lr > math.log(0.5):
            break
        if direction == -1 and lr > math.log(0.5):
            break
        eps = eps * 2.0**direction
    return float(np.clip(eps, 1e-6, 10.0))


def _run_chain(target, cfg: HmcConfig, chain: int, init=None):
    rng = np.random.default_rng([cfg.seed, chain, 1])
    q = initialize(target.dim, [cfg.seed, chain], cfg.init_radius) if init is None else np.array(init, float)
    logp, grad = target.log_density_and_grad(q)
    if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
        raise FloatingPointError(f"chain {chain}: non-finite log density or gradient at the initial point")
    dim = target.dim
    inv_metric = np.ones(dim)
    eps = _reasonable_eps(target, q, logp, grad, inv_metric, rng)
    da = DualAveraging(eps, cfg.target_accept)

    W = cfg.warmup
    collect = (W // 2, int(0.9 * W))
    adapt_mass = cfg.adapt_mass and collect[1] - collect[0] >= 10
    window = []
    lo = max(1, round(cfg.leapfrog_steps * (1 - cfg.jitter)))
    hi = max(lo, round(cfg.leapfrog_steps * (1 + cfg.jitter)))

    out = np.empty((cfg.retained, dim))
    n_acc = 0.0
    n_div = 0
    for it in range(cfg.iterations):
        n_steps = int(rng.integers(lo, hi + 1))
        p0 = rng.standard_normal(dim) / np.sqrt(inv_metric)
        h0 = hamiltonian(logp, p0, inv_metric)
        q1, p1, lp1, g1 = leapfrog(target, q, p0, grad, eps, n_steps, inv_metric)
        h1 = hamiltonian(lp1, p1, inv_metric) if np.isfinite(lp1) else np.inf
        dH = h1 - h0
        divergent = not np.isfinite(dH) or abs(dH) > DIVERGENCE_THRESHOLD
        accept_stat = 0.0 if divergent else min(1.0, math.exp(-dH))
        if not divergent and rng.uniform() < accept_stat:
            q, logp, grad = q1, lp1, g1

        if it < W:
            eps = da.update(accept_stat)
            if adapt_mass and collect[0] <= it < collect[1]:
                window.append(q.copy())
            if adapt_mass and it == collect[1] - 1:
                n = len(window)
                var = np.var(np.array(window), axis=0, ddof=1)
                inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                eps = _reasonable_eps(target, q, logp, grad, inv_metric, rng)
                da = DualAveraging(eps, cfg.target_accept)
            if it == W - 1:
                eps = da.final
        else:
            out[it - W] = q
            n_acc += accept_stat
            n_div += divergent
    return out, n_acc / max(cfg.retained, 1), eps, n_div, inv_metric


def sample(target, cfg: HmcConfig = HmcConfig(), layout: BlockLayout | None = None, inits=None) -> PosteriorDraws:
    """Run ``cfg.chains`` independent chains on any object exposing
    ``dim`` and ``log_density_and_grad``."""
    args = [(target, cfg, c, None if inits is None else inits[c]) for c in range(cfg.chains)]
    if cfg.n_jobs > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.n_jobs, cfg.chains)) as ex:
            results = list(ex.map(_run_chain, *zip(*args)))
    else:
        results = [_run_chain(*a) for a in args]
    draws = np.stack([r[0] for r in results], axis=1)
    dr = PosteriorDraws(
        draws=draws,
        accept_rates=np.array([r[1] for r in results]),
        step_sizes=np.array([r[2] for r in results]),
        layout=layout,
        divergences=np.array([r[3] for r in results]),
        inv_metrics=np.stack([r[4] for r in results]),
        config=cfg,
    )
    rate = dr.divergences.sum() / max(cfg.retained * cfg.chains, 1)
    if rate > 0.2:
        msg = f"divergence rate {rate:.1%} after warmup exceeds 20%"
        dr.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    return dr


def run_hmc(d: Dataset, prior: PriorSpec = PriorSpec(), cfg: HmcConfig = HmcConfig(), layout: BlockLayout | None = None) -> PosteriorDraws:
    target = Posterior(d, layout, prior)
    log.info("fitting %d units, %d parameters, %d chains", d.N, target.dim, cfg.chains)
    return sample(target, cfg, layout=target.layout)


def diagnostics(dr: PosteriorDraws) -> Diagnostics:
    return diagnose(dr.draws, dr.names())


def config_dict(cfg: HmcConfig) -> dict:
    return asdict(cfg)
