"""Longitudinal principal strata.

A unit's stratum at period t is determined by its pair of potential survival
indicators ``(S_t(0), S_t(1))``; a longitudinal stratum is the per-period
sequence of those labels.  Death is absorbing, which restricts the transitions
between consecutive periods.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache


class Stratum(enum.Enum):
    AS = "AS"
    CS = "CS"
    DS = "DS"
    NS = "NS"

    def __str__(self) -> str:
        return self.value

    def survives(self, w: int) -> int:
        """Potential survival indicator under arm ``w``."""
        return _SURVIVAL[self][w]


# (S(0), S(1)) per stratum.
_SURVIVAL = {
    Stratum.AS: (1, 1),
    Stratum.CS: (0, 1),
    Stratum.DS: (1, 0),
    Stratum.NS: (0, 0),
}

# Canonical label order used everywhere sequences are sorted.
LABEL_ORDER = (Stratum.AS, Stratum.CS, Stratum.DS, Stratum.NS)

TRANSITIONS = {
    Stratum.AS: (Stratum.AS, Stratum.CS, Stratum.DS, Stratum.NS),
    Stratum.CS: (Stratum.CS, Stratum.NS),
    Stratum.DS: (Stratum.DS, Stratum.NS),
    Stratum.NS: (Stratum.NS,),
}


def allowed_next(label: Stratum, monotone: bool) -> tuple[Stratum, ...]:
    nxt = TRANSITIONS[label]
    if monotone:
        nxt = tuple(g for g in nxt if g is not Stratum.DS)
    return nxt


@dataclass(frozen=True, order=False)
class StratumSequence:
    labels: tuple[Stratum, ...]
    monotone: bool = True

    def __post_init__(self):
        if not self.labels:
            raise ValueError("empty stratum sequence")
        if self.monotone and Stratum.DS in self.labels:
            raise ValueError(f"DS label in monotone sequence {self}")
        for a, b in zip(self.labels, self.labels[1:]):
            if b not in TRANSITIONS[a]:
                raise ValueError(f"invalid transition {a}->{b} in {self}")

    @classmethod
    def parse(cls, text: str, monotone: bool = True) -> StratumSequence:
        return cls(tuple(Stratum(s) for s in text.split(".")), monotone)

    @property
    def T(self) -> int:
        return len(self.labels)

    def __str__(self) -> str:
        return ".".join(g.value for g in self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def prefix(self, t: int) -> tuple[Stratum, ...]:
        """Labels of periods ``1..t``."""
        return self.labels[:t]

    def always_survivor_through(self, s: int) -> bool:
        return all(g is Stratum.AS for g in self.labels[:s])


@dataclass(frozen=True)
class ObservedCell:
    w: int
    survival: tuple[int, ...]

    def __post_init__(self):
        if self.w not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {self.w}")
        if any(v not in (0, 1) for v in self.survival):
            raise ValueError(f"survival indicators must be binary: {self.survival}")
        if any(b > a for a, b in zip(self.survival, self.survival[1:])):
            raise ValueError(f"survival not absorbing: {self.survival}")

    @property
    def alive_horizon(self) -> int:
        return sum(self.survival)


def _sort_key(seq: StratumSequence) -> tuple[int, ...]:
    return tuple(LABEL_ORDER.index(g) for g in seq.labels)


@lru_cache(maxsize=None)
def enumerate_sequences(T: int, monotone: bool = True) -> tuple[StratumSequence, ...]:
    """All valid longitudinal strata over ``T`` periods in canonical order."""
    if T < 1:
        raise ValueError(f"need at least one period, got T={T}")
    first = allowed_next(Stratum.AS, monotone)  # every label can start a path
    paths = [(g,) for g in first]
    for _ in range(T - 1):
        paths = [p + (g,) for p in paths for g in allowed_next(p[-1], monotone)]
    seqs = [StratumSequence(p, monotone) for p in paths]
    return tuple(sorted(seqs, key=_sort_key))


def survival_path(seq: StratumSequence, w: int) -> tuple[int, ...]:
    return tuple(g.survives(w) for g in seq.labels)


def observed_cells(T: int) -> list[ObservedCell]:
    """The 2(T+1) absorbing survival patterns, treated arm first."""
    cells = []
    for w in (1, 0):
        for alive in range(T, -1, -1):
            cells.append(ObservedCell(w, (1,) * alive + (0,) * (T - alive)))
    return cells


@lru_cache(maxsize=None)
def _compatible(w: int, survival: tuple[int, ...], monotone: bool):
    return tuple(
        seq
        for seq in enumerate_sequences(len(survival), monotone)
        if survival_path(seq, w) == survival
    )


def compatible_strata(cell: ObservedCell, monotone: bool = True) -> tuple[StratumSequence, ...]:
    """Sequences whose survival path under the observed arm matches the cell."""
    return _compatible(cell.w, tuple(cell.survival), monotone)

