"""Parameter layout, priors, and the stratum/outcome submodels.

Parameters live in one flat float vector.  :class:`BlockLayout` names every
coordinate:

* one stratum-transition block per history that still has a choice to make
  (the empty history, and every monotone prefix ending in AS or CS).  Each
  non-baseline destination gets an intercept plus K slopes; NS is the
  baseline with its logit fixed at zero.
* one logistic outcome model per (arm, stratum prefix) where the outcome is
  defined: an intercept, a lag coefficient on the previous outcome for t >= 2,
  and covariate slopes that are shared across all models by default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .strata import Stratum, StratumSequence, allowed_next, enumerate_sequences

Prefix = tuple  # tuple[Stratum, ...]


class UndefinedOutcomeError(ValueError):
    """The requested potential outcome is truncated by death."""


def fmt_prefix(prefix: Prefix) -> str:
    return ".".join(g.value for g in prefix) if prefix else "-"


def parse_prefix(text: str) -> Prefix:
    return () if text in ("", "-") else tuple(Stratum(s) for s in text.split("."))


@dataclass(frozen=True)
class PriorSpec:
    stratum_scale: float = 2.5
    outcome_scale: float = 2.0

    def __post_init__(self):
        if not (self.stratum_scale > 0 and self.outcome_scale > 0):
            raise ValueError("prior scales must be strictly positive")


@dataclass(frozen=True)
class StratumBlock:
    history: Prefix
    destinations: tuple[Stratum, ...]  # baseline NS last
    offset: int
    K: int

    @property
    def t(self) -> int:
        return len(self.history) + 1

    @property
    def free(self) -> tuple[Stratum, ...]:
        return self.destinations[:-1]

    @property
    def size(self) -> int:
        return len(self.free) * (self.K + 1)

    @property
    def is_multinomial(self) -> bool:
        return len(self.destinations) > 2


@dataclass(frozen=True)
class OutcomeModel:
    w: int
    prefix: Prefix
    intercept: int
    lag: int | None
    slopes: slice

    @property
    def t(self) -> int:
        return len(self.prefix)

    @property
    def name(self) -> str:
        return f"w={self.w},{fmt_prefix(self.prefix)}"


def _stratum_histories(T: int) -> list[Prefix]:
    out: list[Prefix] = [()]
    for length in range(1, T):
        prefixes = {seq.prefix(length) for seq in enumerate_sequences(T, True)}
        out += sorted(
            (p for p in prefixes if p[-1] is not Stratum.NS),
            key=lambda p: [g.value for g in p],
        )
    return out


def _outcome_prefixes(T: int) -> list[tuple[int, Prefix]]:
    out = []
    for t in range(1, T + 1):
        prefixes = sorted({seq.prefix(t) for seq in enumerate_sequences(T, True)}, key=lambda p: [g.value for g in p])
        for w in (0, 1):
            out += [(w, p) for p in prefixes if p[-1].survives(w)]
    return out


@dataclass(frozen=True)
class BlockLayout:
    T: int
    K: int
    covariate_names: tuple[str, ...] = ()
    shared_slopes: bool = True
    stratum_blocks: tuple[StratumBlock, ...] = field(init=False)
    outcome_models: tuple[OutcomeModel, ...] = field(init=False)
    n_stratum: int = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        if self.T < 1 or self.K < 0:
            raise ValueError(f"bad layout dimensions T={self.T}, K={self.K}")
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"x{j + 1}" for j in range(self.K)))
        if len(self.covariate_names) != self.K:
            raise ValueError("covariate_names length must equal K")
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

        blocks, off = [], 0
        for h in _stratum_histories(self.T):
            if h:
                dests = allowed_next(h[-1], monotone=True)
            else:
                dests = (Stratum.AS, Stratum.CS, Stratum.NS)
            b = StratumBlock(h, dests, off, self.K)
            blocks.append(b)
            off += b.size
        n_stratum = off

        keys = _outcome_prefixes(self.T)
        n_lag = sum(1 for _, p in keys if len(p) >= 2)
        lag_off = n_stratum + len(keys)
        slope_off = lag_off + n_lag
        models, li = [], lag_off
        for m, (w, p) in enumerate(keys):
            lag = None
            if len(p) >= 2:
                lag, li = li, li + 1
            if self.shared_slopes:
                sl = slice(slope_off, slope_off + self.K)
            else:
                sl = slice(slope_off + m * self.K, slope_off + (m + 1) * self.K)
            models.append(OutcomeModel(w, p, n_stratum + m, lag, sl))
        n_slopes = self.K if self.shared_slopes else self.K * len(keys)
        object.__setattr__(self, "stratum_blocks", tuple(blocks))
        object.__setattr__(self, "outcome_models", tuple(models))
        object.__setattr__(self, "n_stratum", n_stratum)
        object.__setattr__(self, "dim", slope_off + n_slopes)

    @classmethod
    def for_dataset(cls, d, shared_slopes: bool = True) -> BlockLayout:
        return cls(d.T, d.K, d.covariate_names, shared_slopes)

    # lookups

    def block_for(self, history: Prefix) -> StratumBlock | None:
        for b in self.stratum_blocks:
            if b.history == tuple(history):
                return b
        return None

    def outcome_model(self, w: int, prefix: Prefix) -> OutcomeModel | None:
        for m in self.outcome_models:
            if m.w == w and m.prefix == tuple(prefix):
                return m
        return None

    @property
    def names(self) -> list[str]:
        cov = ["const", *self.covariate_names]
        names = []
        for b in self.stratum_blocks:
            for g in b.free:
                names += [f"delta[{g}|{fmt_prefix(b.history)}][{c}]" for c in cov]
        names += [f"beta0[{m.name}]" for m in self.outcome_models]
        names += [f"lambda[{m.name}]" for m in self.outcome_models if m.lag is not None]
        if self.shared_slopes:
            names += [f"beta_x[{c}]" for c in self.covariate_names]
        else:
            for m in self.outcome_models:
                names += [f"beta_x[{m.name}][{c}]" for c in self.covariate_names]
        return names

    def block_kinds(self) -> np.ndarray:
        """0 for stratum coordinates, 1 for outcome coordinates."""
        kinds = np.ones(self.dim, dtype=np.int8)
        kinds[: self.n_stratum] = 0
        return kinds

    def prior_scales(self, prior: PriorSpec) -> np.ndarray:
        return np.where(self.block_kinds() == 0, prior.stratum_scale, prior.outcome_scale)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    # structured views

    def unpack(self, theta) -> dict:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"parameter vector has shape {theta.shape}, layout expects ({self.dim},)")
        delta = {
            fmt_prefix(b.history): theta[b.offset : b.offset + b.size].reshape(len(b.free), self.K + 1).copy()
            for b in self.stratum_blocks
        }
        beta0 = np.array([theta[m.intercept] for m in self.outcome_models])
        lam = np.array([theta[m.lag] for m in self.outcome_models if m.lag is not None])
        if self.shared_slopes:
            beta_x = theta[self.outcome_models[0].slopes].copy()
        else:
            beta_x = np.stack([theta[m.slopes] for m in self.outcome_models])
        return {"delta": delta, "beta0": beta0, "lambda": lam, "beta_x": beta_x}

    def pack(self, parts: dict) -> np.ndarray:
        theta = np.empty(self.dim)
        for b in self.stratum_blocks:
            theta[b.offset : b.offset + b.size] = np.asarray(parts["delta"][fmt_prefix(b.history)]).ravel()
        theta[[m.intercept for m in self.outcome_models]] = parts["beta0"]
        theta[[m.lag for m in self.outcome_models if m.lag is not None]] = parts["lambda"]
        bx = np.asarray(parts["beta_x"], dtype=float)
        if self.shared_slopes:
            theta[self.outcome_models[0].slopes] = bx
        else:
            for m, row in zip(self.outcome_models, bx):
                theta[m.slopes] = row
        return theta

    def set(self, theta, name: str, value: float) -> np.ndarray:
        """Copy of ``theta`` with the coordinate called ``name`` replaced."""
        out = np.array(theta, dtype=float)
        out[self.names.index(name)] = value
        return out

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "K": self.K,
            "covariate_names": list(self.covariate_names),
            "shared_slopes": self.shared_slopes,
            "dim": self.dim,
            "n_stratum": self.n_stratum,
            "names": self.names,
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> BlockLayout:
        if isinstance(obj, str):
            obj = json.loads(obj)
        lay = cls(obj["T"], obj["K"], tuple(obj["covariate_names"]), obj["shared_slopes"])
        if "names" in obj and obj["names"] != lay.names:
            raise ValueError("serialized layout names do not match this version's layout")
        return lay


def _check_x(x, layout: BlockLayout) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != layout.K:
        raise ValueError(f"covariate vector has length {x.shape[0]}, expected {layout.K}")
    return x


def transition_log_probs(history: Prefix, x, theta, layout: BlockLayout) -> dict[Stratum, float]:
    history = tuple(history)
    if len(history) >= layout.T:
        raise ValueError(f"history {fmt_prefix(history)} has no next period when T={layout.T}")
    if history:
        StratumSequence(history, monotone=True)  # validates the prefix
    x = _check_x(x, layout)
    if history and history[-1] is Stratum.NS:
        return {Stratum.NS: 0.0}
    b = layout.block_for(history)
    coef = np.asarray(theta, dtype=float)[b.offset : b.offset + b.size].reshape(len(b.free), layout.K + 1)
    logits = np.append(coef[:, 0] + coef[:, 1:] @ x, 0.0)
    lp = logits - logsumexp(logits)
    return dict(zip(b.destinations, lp.tolist()))


def stratum_transition_probs(history: Prefix, x, theta, layout: BlockLayout) -> dict[Stratum, float]:
    """P(G_t = g | G_1..G_{t-1} = history, x) over permitted destinations."""
    return {g: math.exp(v) for g, v in transition_log_probs(history, x, theta, layout).items()}


def sequence_log_prob(seq: StratumSequence, x, theta, layout: BlockLayout) -> float:
    if not seq.monotone or Stratum.DS in seq.labels:
        raise ValueError(f"non-monotone sequence {seq} not supported by the model")
    if len(seq) != layout.T:
        raise ValueError(f"sequence length {len(seq)} != T={layout.T}")
    total = 0.0
    for t in range(layout.T):
        total += transition_log_probs(seq.labels[:t], x, theta, layout)[seq.labels[t]]
    return total


def sequence_prob(seq: StratumSequence, x, theta, layout: BlockLayout) -> float:
    return math.exp(sequence_log_prob(seq, x, theta, layout))


def outcome_logit(t: int, w: int, seq: StratumSequence, y_prev, x, theta, layout: BlockLayout) -> float:
    if not 1 <= t <= layout.T:
        raise ValueError(f"period {t} outside 1..{layout.T}")
    prefix = seq.prefix(t)
    m = layout.outcome_model(w, prefix)
    if m is None:
        raise UndefinedOutcomeError(f"Y_{t}({w}) is undefined for stratum prefix {fmt_prefix(prefix)}")
    if (t >= 2) != (y_prev is not None):
        raise ValueError("y_prev must be given exactly when t >= 2")
    theta = np.asarray(theta, dtype=float)
    x = _check_x(x, layout)
    eta = theta[m.intercept] + float(theta[m.slopes] @ x)
    if m.lag is not None:
        eta += theta[m.lag] * float(y_prev)
    return float(eta)


def outcome_prob(t: int, w: int, seq: StratumSequence, y_prev, x, theta, layout: BlockLayout) -> float:
    """P(Y_t(w) = 1 | y_{t-1}, stratum prefix through t, x)."""
    return float(expit(outcome_logit(t, w, seq, y_prev, x, theta, layout)))


def log_prior(theta, layout: BlockLayout, prior: PriorSpec = PriorSpec()) -> float:
    theta = np.asarray(theta, dtype=float)
    sc = layout.prior_scales(prior)
    return float(np.sum(-0.5 * (theta / sc) ** 2 - np.log(sc) - 0.5 * math.log(2 * math.pi)))


def grad_log_prior(theta, layout: BlockLayout, prior: PriorSpec = PriorSpec()) -> np.ndarray:
    sc = layout.prior_scales(prior)
    return -np.asarray(theta, dtype=float) / sc**2


def sequence_log_prob_matrix(X, theta, layout: BlockLayout) -> np.ndarray:
    """(n, G) matrix of log P(G = g | x) for every monotone sequence g."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta = np.asarray(theta, dtype=float)
    Xt = np.hstack([np.ones((X.shape[0], 1)), X])
    block_lp = {}
    for b in layout.stratum_blocks:
        coef = theta[b.offset : b.offset + b.size].reshape(len(b.free), layout.K + 1)
        logits = np.hstack([Xt @ coef.T, np.zeros((X.shape[0], 1))])
        block_lp[b.history] = logits - logsumexp(logits, axis=1, keepdims=True)
    seqs = enumerate_sequences(layout.T, True)
    out = np.zeros((X.shape[0], len(seqs)))
    for g, seq in enumerate(seqs):
        for t in range(layout.T):
            h = seq.labels[:t]
            if h in block_lp:
                b = layout.block_for(h)
                out[:, g] += block_lp[h][:, b.destinations.index(seq.labels[t])]
    return out


def outcome_linear_parts(X, theta, layout: BlockLayout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-model intercepts (M,), lags (M,; 0 where absent) and covariate
    contributions (n, M)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta = np.asarray(theta, dtype=float)
    models = layout.outcome_models
    b0 = np.array([theta[m.intercept] for m in models])
    lag = np.array([theta[m.lag] if m.lag is not None else 0.0 for m in models])
    xb = np.stack([X @ theta[m.slopes] for m in models], axis=1) if layout.K else np.zeros((X.shape[0], len(models)))
    return b0, lag, xb
