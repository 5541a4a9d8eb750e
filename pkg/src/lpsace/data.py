"""Firm panel ingestion and validation.

Files are comma-delimited with a header.  A truncated outcome (unit dead at
that period) is written as ``*``; an empty field is read the same way.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

TRUNCATED = -1
TRUNCATED_TOKENS = ("*", "")


class DataValidationError(ValueError):
    def __init__(self, record_id, rule: str):
        self.record_id = record_id
        self.rule = rule
        super().__init__(f"record {record_id!r}: {rule}")


@dataclass(frozen=True)
class FirmRecord:
    id: str
    x: tuple[float, ...]
    w: int
    s: tuple[int, ...]
    y: tuple[int, ...]  # 0, 1 or TRUNCATED

    @property
    def alive_horizon(self) -> int:
        return int(sum(self.s))


def check_record(rid, w, s, y) -> None:
    """Raise DataValidationError if the record breaks a panel rule."""
    if w not in (0, 1):
        raise DataValidationError(rid, f"arm must be 0/1, got {w}")
    if len(s) != len(y):
        raise DataValidationError(rid, "survival and outcome lengths differ")
    for v in s:
        if v not in (0, 1):
            raise DataValidationError(rid, f"survival indicator {v} not binary")
    for a, b in zip(s, s[1:]):
        if b > a:
            raise DataValidationError(rid, "survival not absorbing")
    for st, yt in zip(s, y):
        if st == 1 and yt == TRUNCATED:
            raise DataValidationError(rid, "outcome missing while alive")
        if st == 0 and yt != TRUNCATED:
            raise DataValidationError(rid, "outcome present after death")
        if st == 1 and yt not in (0, 1):
            raise DataValidationError(rid, f"outcome {yt} not binary")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated panel stored column-wise.

    ``x`` is (N, K) float, ``w`` (N,), ``s`` and ``y`` (N, T) int8 with
    TRUNCATED marking undefined outcomes.
    """

    ids: tuple[str, ...]
    x: np.ndarray
    w: np.ndarray
    s: np.ndarray
    y: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        n = len(self.ids)
        if x.ndim != 2 or x.shape[0] != n:
            x = x.reshape(n, len(self.covariate_names))
        s = np.atleast_2d(np.asarray(self.s, dtype=np.int8))
        y = np.atleast_2d(np.asarray(self.y, dtype=np.int8))
        if s.shape[0] != n or y.shape != s.shape:
            raise ValueError(f"survival/outcome arrays have shapes {s.shape}, {y.shape} for {n} records")
        w = np.asarray(self.w, dtype=np.int8).reshape(n)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        for name, arr in (("x", x), ("w", w), ("s", s), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if x.shape[1] != len(self.covariate_names):
            raise ValueError("covariate names do not match covariate columns")
        if not np.all(np.isfinite(x)):
            bad = int(np.where(~np.isfinite(x).all(axis=1))[0][0])
            raise DataValidationError(self.ids[bad], "non-finite covariate")
        if len(set(self.ids)) != n:
            seen = set()
            for i in self.ids:
                if i in seen:
                    raise DataValidationError(i, "duplicate id")
                seen.add(i)
        self._validate_arrays()

    def _validate_arrays(self):
        s, y, w = self.s, self.y, self.w
        ok = np.isin(w, (0, 1))
        ok &= np.all((s == 0) | (s == 1), axis=1)
        ok &= np.all(np.diff(s, axis=1) <= 0, axis=1)
        ok &= np.all(np.where(s == 1, (y == 0) | (y == 1), y == TRUNCATED), axis=1)
        if not ok.all():
            i = int(np.where(~ok)[0][0])
            check_record(self.ids[i], int(w[i]), tuple(s[i].tolist()), tuple(y[i].tolist()))
            raise DataValidationError(self.ids[i], "invalid record")  # pragma: no cover

    @classmethod
    def from_records(cls, records, covariate_names=None, T=None) -> Dataset:
        records = list(records)
        if not records:
            if covariate_names is None or T is None:
                raise ValueError("empty dataset needs covariate_names and T")
            k = len(covariate_names)
            return cls((), np.zeros((0, k)), np.zeros(0), np.zeros((0, T)), np.zeros((0, T)), covariate_names)
        for r in records:
            check_record(r.id, r.w, r.s, r.y)
        k = len(records[0].x)
        if covariate_names is None:
            covariate_names = tuple(f"x{j + 1}" for j in range(k))
        return cls(
            ids=tuple(r.id for r in records),
            x=np.array([r.x for r in records], dtype=float).reshape(len(records), k),
            w=np.array([r.w for r in records]),
            s=np.array([r.s for r in records]),
            y=np.array([r.y for r in records]),
            covariate_names=covariate_names,
        )

    @classmethod
    def empty(cls, K: int, T: int) -> Dataset:
        return cls.from_records([], tuple(f"x{j + 1}" for j in range(K)), T)

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def K(self) -> int:
        return self.x.shape[1]

    @property
    def T(self) -> int:
        return self.s.shape[1]

    @cached_property
    def alive_horizon(self) -> np.ndarray:
        return self.s.sum(axis=1).astype(np.int64)

    @property
    def records(self) -> list[FirmRecord]:
        return [self.record(i) for i in range(self.N)]

    def record(self, i: int) -> FirmRecord:
        return FirmRecord(
            self.ids[i],
            tuple(float(v) for v in self.x[i]),
            int(self.w[i]),
            tuple(int(v) for v in self.s[i]),
            tuple(int(v) for v in self.y[i]),
        )

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx)
        return Dataset(
            tuple(self.ids[i] for i in idx), self.x[idx], self.w[idx], self.s[idx], self.y[idx], self.covariate_names
        )

    def standardized(self) -> Dataset:
        """Copy with each non-constant covariate centred and scaled to unit sd."""
        mu = self.x.mean(axis=0)
        sd = self.x.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        mu = np.where(self.x.std(axis=0) > 0, mu, 0.0)
        return Dataset(self.ids, (self.x - mu) / sd, self.w, self.s, self.y, self.covariate_names)


@dataclass
class Schema:
    """Column mapping.  Unset lists are inferred from the header."""

    id: str = "id"
    w: str = "w"
    x: list[str] | None = None
    s: list[str] | None = None
    y: list[str] | None = None
    truncated_tokens: tuple[str, ...] = field(default=TRUNCATED_TOKENS)

    @classmethod
    def from_json(cls, path) -> Schema:
        cfg = json.loads(Path(path).read_text())
        if "truncated_tokens" in cfg:
            cfg["truncated_tokens"] = tuple(cfg["truncated_tokens"])
        return cls(**cfg)

    def resolve(self, header: list[str]) -> Schema:
        def numbered(prefix):
            pat = re.compile(rf"^{prefix}(\d+)$")
            cols = [(int(m.group(1)), c) for c in header if (m := pat.match(c))]
            return [c for _, c in sorted(cols)]

        s = self.s if self.s is not None else numbered("s")
        y = self.y if self.y is not None else numbered("y")
        if self.x is not None:
            x = self.x
        else:
            taken = {self.id, self.w, *s, *y}
            x = [c for c in header if c not in taken]
        missing = [c for c in [self.id, self.w, *x, *s, *y] if c not in header]
        if missing:
            raise ValueError(f"columns missing from file: {missing}")
        if not s or len(s) != len(y):
            raise ValueError(f"need matching survival/outcome columns, got {s} and {y}")
        return Schema(self.id, self.w, list(x), list(s), list(y), self.truncated_tokens)


def _parse_int(tok: str, rid, what: str) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise DataValidationError(rid, f"cannot parse {what} value {tok!r}") from None
    if not v.is_integer():
        raise DataValidationError(rid, f"{what} value {tok!r} not an integer")
    return int(v)


def read_dataset(text: str, schema: Schema | None = None, require_overlap: bool = True) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty file") from None
    sch = (schema or Schema()).resolve(header)
    col = {c: j for j, c in enumerate(header)}
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rid = row[col[sch.id]]
        try:
            x = tuple(float(row[col[c]]) for c in sch.x)
        except ValueError:
            raise DataValidationError(rid, "cannot parse covariate") from None
        w = _parse_int(row[col[sch.w]], rid, "arm")
        s = tuple(_parse_int(row[col[c]], rid, "survival") for c in sch.s)
        y = tuple(
            TRUNCATED if row[col[c]].strip() in sch.truncated_tokens else _parse_int(row[col[c]], rid, "outcome")
            for c in sch.y
        )
        check_record(rid, w, s, y)
        records.append(FirmRecord(rid, x, w, s, y))
    d = Dataset.from_records(records, tuple(sch.x), len(sch.s))
    if require_overlap:
        arms = set(d.w.tolist())
        if arms != {0, 1}:
            raise ValueError(f"both arms must contain at least one record, found arms {sorted(arms)}")
    return d


def load_dataset(path, schema: Schema | None = None, require_overlap: bool = True) -> Dataset:
    return read_dataset(Path(path).read_text(), schema, require_overlap)


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def dumps_dataset(d: Dataset) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    T = d.T
    wr.writerow(["id", "w", *d.covariate_names, *[f"s{t + 1}" for t in range(T)], *[f"y{t + 1}" for t in range(T)]])
    for i in range(d.N):
        ys = ["*" if v == TRUNCATED else str(int(v)) for v in d.y[i]]
        wr.writerow([d.ids[i], int(d.w[i]), *map(_fmt, d.x[i]), *map(str, d.s[i].tolist()), *ys])
    return buf.getvalue()


def write_dataset(d: Dataset, path) -> None:
    Path(path).write_text(dumps_dataset(d))


def observed_cell_proportions(d: Dataset) -> dict[tuple[int, tuple[int, ...]], float]:
    """Share of each arm falling in each absorbing survival pattern."""
    out = {}
    for w in (1, 0):
        in_arm = d.w == w
        n = int(in_arm.sum())
        for alive in range(d.T, -1, -1):
            path = (1,) * alive + (0,) * (d.T - alive)
            k = int(np.sum(in_arm & (d.alive_horizon == alive)))
            out[(w, path)] = k / n if n else float("nan")
    return out


def survival_summary(d: Dataset) -> dict:
    """Cumulative survival and per-period closures by arm.

    ``closed`` counts units dying exactly at t, as a share of the arm.
    """
    out = {}
    for w in (0, 1):
        arm = d.s[d.w == w]
        n = len(arm)
        alive = arm.mean(axis=0) if n else np.full(d.T, np.nan)
        prev = np.concatenate([[1.0], alive[:-1]])
        out[w] = {"active": alive.tolist(), "closed": (prev - alive).tolist()}
    return out


def covariate_balance(d: Dataset) -> dict[str, dict[str, float]]:
    c, t = d.x[d.w == 0], d.x[d.w == 1]
    out = {}
    for j, name in enumerate(d.covariate_names):
        out[name] = {
            "control": float(c[:, j].mean()) if len(c) else float("nan"),
            "treated": float(t[:, j].mean()) if len(t) else float("nan"),
            "overall": float(d.x[:, j].mean()) if d.N else float("nan"),
        }
    return out


def summary_json(d: Dataset) -> dict:
    return {
        "N": d.N,
        "K": d.K,
        "T": d.T,
        "cells": [
            {"w": w, "survival": list(path), "proportion": p}
            for (w, path), p in observed_cell_proportions(d).items()
        ],
        "survival": {str(w): v for w, v in survival_summary(d).items()},
        "balance": covariate_balance(d),
    }
