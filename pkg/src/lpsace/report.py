"""Posterior summary tables as JSON and plain text."""

from __future__ import annotations

import json
import re
from importlib import resources

import jsonschema
import numpy as np

from .data import Dataset
from .diagnostics import Diagnostics
from .estimands import sace_table, stratum_proportions, summarize
from .sampler import PosteriorDraws
from .strata import StratumSequence

COLUMNS = ["Mean", "st.dev", "0.05", "0.95"]
FIELDS = ["mean", "sd", "q05", "q95"]

# display order for three periods: strata grouped by when units die
DISPLAY_ORDER_T3 = (
    "NS.NS.NS",
    "CS.NS.NS",
    "AS.NS.NS",
    "AS.AS.NS",
    "AS.CS.NS",
    "CS.CS.NS",
    "CS.CS.CS",
    "AS.CS.CS",
    "AS.AS.CS",
    "AS.AS.AS",
)


def load_schema() -> dict:
    return json.loads(resources.files("lpsace").joinpath("schemas/report.schema.json").read_text())


def validate_report(obj: dict) -> None:
    jsonschema.validate(obj, load_schema())


def _clean(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _row(label, stats, **extra) -> dict:
    return {"label": label, **{k: _clean(stats[k]) for k in FIELDS}, **extra}


def _sace_label(s: int, t: int) -> str:
    return "SACE_1(1)" if s == 1 else f"SACE_{{1:{s}}}({t})"


def build_report(
    d: Dataset,
    dr: PosteriorDraws,
    mode: str = "finite",
    seed: int = 0,
    thin_to: int | None = None,
    diag: Diagnostics | None = None,
) -> dict:
    sp = stratum_proportions(d, dr, thin_to)
    T = len(StratumSequence.parse(sp.labels[0]).labels)
    order = DISPLAY_ORDER_T3 if T == 3 else sp.labels
    by_label = {r["stratum"]: r for r in sp.rows()}
    strata_rows = [_row(lab, by_label[lab]) for lab in order]

    seqs = [StratumSequence.parse(lab) for lab in sp.labels]
    shares = []
    for s in range(1, T + 1):
        cols = [g for g, q in enumerate(seqs) if q.always_survivor_through(s)]
        label = "AS at 1" if s == 1 else f"AS at 1..{s}"
        shares.append(_row(label, summarize(sp.per_draw[:, cols].sum(axis=1)), s=s))

    tab = sace_table(d, dr, mode, seed, thin_to)

    def sace_rows(pairs):
        return [_row(_sace_label(s, t), tab[(s, t)].row(), s=s, t_prime=t, n_skipped=tab[(s, t)].n_skipped) for s, t in pairs]

    tables = {
        "strata": {"title": "Posterior stratum membership proportions", "rows": strata_rows},
        "always_survivor_shares": {"title": "Share of always-survivors by horizon", "rows": shares},
        "sace_headline": {"title": "SACE at each horizon", "rows": sace_rows([(s, s) for s in range(1, T + 1)])},
        "sace_trajectory": {
            "title": f"Longitudinal SACE for units always surviving through {T}",
            "rows": sace_rows([(T, t) for t in range(1, T + 1)]),
        },
    }
    if T > 1:
        tables["sace_trajectory_short"] = {
            "title": f"Longitudinal SACE for units always surviving through {T - 1}",
            "rows": sace_rows([(T - 1, t) for t in range(1, T)]),
        }
    tables["sace_all"] = {"title": "All SACE estimands", "rows": sace_rows(sorted(tab))}
    out = {
        "meta": {"T": T, "mode": mode, "n_draws": int(sp.per_draw.shape[0]), "columns": COLUMNS},
        "tables": tables,
    }
    if diag is not None:
        out["diagnostics"] = {k: (_clean(v) if isinstance(v, float) else v) for k, v in diag.summary().items()}
    return out


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.3f}"


def render_text(report: dict) -> str:
    lines = []
    for key, tab in report["tables"].items():
        rows = tab["rows"]
        width = max([len(r["label"]) for r in rows] + [8])
        lines.append(f"[{key}] {tab['title']}")
        lines.append(" " * width + "".join(f"{c:>9}" for c in COLUMNS))
        for r in rows:
            lines.append(f"{r['label']:<{width}}" + "".join(f"{_fmt(r[f]):>9}" for f in FIELDS))
        lines.append("")
    diag = report.get("diagnostics")
    if diag:
        lines.append(f"max R-hat {_fmt(diag.get('max_rhat'))}, min ESS {_fmt(diag.get('min_ess'))}")
        lines.extend(f"warning: {w}" for w in diag.get("warnings", []))
    return "\n".join(lines).rstrip() + "\n"


_HEAD = re.compile(r"^\[(\w+)\] ")


def parse_text(text: str) -> dict[str, list[dict]]:
    """Recover the numeric tables from ``render_text`` output."""
    tables: dict[str, list[dict]] = {}
    current = None
    for line in text.splitlines():
        m = _HEAD.match(line)
        if m:
            current = tables.setdefault(m.group(1), [])
            continue
        parts = line.split()
        if not parts:
            current = None
            continue
        if current is None or len(parts) < 5 or parts[-4:] == COLUMNS:
            continue
        vals = [None if p == "NA" else float(p) for p in parts[-4:]]
        current.append({"label": " ".join(parts[:-4]), **dict(zip(FIELDS, vals))})
    return tables
