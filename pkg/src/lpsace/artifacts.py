"""On-disk formats for fitted draws and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .model import BlockLayout
from .sampler import PosteriorDraws


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sidecar(path, suffix: str) -> Path:
    """``draws.csv`` -> ``draws.<suffix>``."""
    p = Path(path)
    return p.with_name(p.stem + suffix)


def dumps_draws(dr: PosteriorDraws) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["chain", "iteration", *dr.names()])
    n = dr.n_draws
    for c in range(dr.n_chains):
        for i in range(n):
            wr.writerow([c, i, *map(repr, dr.draws[i, c].tolist())])
    return buf.getvalue()


def write_draws(dr: PosteriorDraws, path) -> dict[str, str]:
    """Draws CSV plus a layout sidecar; returns the written paths."""
    path = Path(path)
    path.write_text(dumps_draws(dr))
    lay_path = sidecar(path, ".layout.json")
    lay_path.write_text(json.dumps(dr.layout.to_json(), indent=2) + "\n")
    return {"draws": str(path), "layout": str(lay_path)}


def read_draws(path, layout: BlockLayout | None = None) -> PosteriorDraws:
    path = Path(path)
    if layout is None:
        lay_path = sidecar(path, ".layout.json")
        if not lay_path.exists():
            raise FileNotFoundError(f"layout file {lay_path} not found next to the draws")
        layout = BlockLayout.from_json(json.loads(lay_path.read_text()))
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if header[2:] != layout.names:
        raise ValueError("draws header does not match the parameter layout")
    arr = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    chains = arr[:, 0].astype(int)
    C = int(chains.max()) + 1 if len(arr) else 0
    n = len(arr) // max(C, 1)
    draws = np.empty((n, C, layout.dim))
    for c in range(C):
        block = arr[chains == c]
        if len(block) != n:
            raise ValueError("chains have different numbers of draws")
        draws[:, c] = block[np.argsort(block[:, 1]), 2:]
    return PosteriorDraws(draws, np.full(C, np.nan), np.full(C, np.nan), layout)


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")
