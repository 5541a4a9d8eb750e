"""Command-line entry point: ``lpsace simulate | fit | summarize | ppc | report | describe``.

Exit codes: 0 success, 2 invalid input, 3 diagnostics failure under --strict.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .artifacts import read_draws, read_manifest, sha256_file, sidecar, write_draws, write_manifest
from .data import DataValidationError, Schema, load_dataset, summary_json, write_dataset
from .diagnostics import diagnose
from .estimands import MODES, sace_table, stratum_proportions
from .model import BlockLayout, PriorSpec
from .ppc import posterior_predictive
from .report import build_report, render_text, validate_report
from .sampler import HmcConfig, run_hmc
from .simulation import GeneratorSpec, simulate_dataset

log = logging.getLogger("lpsace")

EXIT_INVALID = 2
EXIT_DIAGNOSTICS = 3


class InputError(click.ClickException):
    exit_code = EXIT_INVALID


def _guard(fn):
    """Map input problems to exit code 2 with a one-line message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DataValidationError, FileNotFoundError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise InputError(str(e)) from e
        except ValueError as e:
            raise InputError(str(e)) from e

    return wrapper


def load_config(path) -> dict:
    """YAML or JSON options keyed by subcommand.  A run manifest is accepted
    too: its ``config`` snapshot is replayed for its ``command``."""
    obj = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(obj, dict):
        raise click.BadParameter("config must be a mapping", param_hint="--config")
    if "command" in obj and "config" in obj:
        return {obj["command"]: obj["config"]}
    if any(k in main.commands for k in obj):
        return obj
    return {name: dict(obj) for name in main.commands}


def _snapshot(params: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()}


def _base_manifest(command: str, params: dict, started: float) -> dict:
    return {
        "command": command,
        "config": _snapshot(params),
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }


@click.group()
@click.version_option(__version__)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="YAML/JSON option file or run manifest.")
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
@click.pass_context
def main(ctx, config, verbose):
    """Bayesian longitudinal principal stratification for outcomes truncated by death."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if config:
        try:
            ctx.default_map = load_config(config)
        except yaml.YAMLError as e:
            raise InputError(f"cannot parse config: {e}") from e


def data_options(fn):
    fn = click.option("--standardize/--no-standardize", default=None, help="Centre and scale covariates [default: off, or as in the fit manifest].")(fn)
    fn = click.option("--schema", type=click.Path(exists=True, dir_okay=False), help="JSON column mapping.")(fn)
    return fn


def _load(data, schema, standardize):
    d = load_dataset(data, Schema.from_json(schema) if schema else None)
    return d.standardized() if standardize else d


def _draws_and_data(draws, data, schema, standardize):
    """Load draws and the dataset they were fitted to, checking the checksum
    recorded by ``fit`` when one is available."""
    manifest_path = sidecar(draws, ".manifest.json")
    ds = read_manifest(manifest_path).get("dataset", {}) if manifest_path.exists() else {}
    if data is None:
        data = ds.get("path")
        if data is None:
            raise InputError("--data is required when the draws have no manifest")
        schema = schema or ds.get("schema")
    if ds.get("sha256") and sha256_file(data) != ds["sha256"]:
        raise InputError(f"checksum of {data} does not match the dataset recorded in {manifest_path}")
    if standardize is None:
        standardize = bool(ds.get("standardize", False))
    d = _load(data, schema, standardize)
    dr = read_draws(draws)
    if dr.layout.K != d.K or dr.layout.T != d.T:
        raise InputError("draws and data disagree on the number of covariates or periods")
    return dr, d, {"path": str(data), "sha256": sha256_file(data), "standardize": standardize}


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Generator spec JSON.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Observed-data CSV to write.")
@click.option("--truth", type=click.Path(dir_okay=False), help="Optional CSV of true strata and potential outcomes.")
@click.option("--n", "n_units", type=int, help="Override the number of units.")
@click.option("--seed", type=int, help="Override the generator seed.")
@_guard
def simulate(spec_path, out, truth, n_units, seed):
    """Draw a synthetic panel from known parameters."""
    started = time.perf_counter()
    params = click.get_current_context().params
    g = GeneratorSpec.from_json(spec_path)
    if n_units is not None:
        g.N = n_units
    if seed is not None:
        g.seed = seed
    d, tr = simulate_dataset(g)
    write_dataset(d, out)
    paths = {"data": out}
    if truth:
        Path(truth).write_text(tr.dumps())
        paths["truth"] = truth
    m = _base_manifest("simulate", params, started)
    m.update(seeds={"generator": g.seed}, paths=paths, dataset={"path": out, "sha256": sha256_file(out), "N": d.N})
    write_manifest(sidecar(out, ".manifest.json"), m)
    click.echo(f"wrote {d.N} units to {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Panel CSV.")
@data_options
@click.option("--out", type=click.Path(dir_okay=False), help="Write JSON here instead of stdout.")
@_guard
def describe(data, schema, standardize, out):
    """Observed-cell proportions, survival and covariate balance."""
    d = _load(data, schema, standardize)
    text = json.dumps(summary_json(d), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Panel CSV.")
@data_options
@click.option("--out", default="draws.csv", show_default=True, type=click.Path(dir_okay=False), help="Draws CSV.")
@click.option("--iters", default=2000, show_default=True, help="Iterations per chain, warmup included.")
@click.option("--warmup", default=1000, show_default=True, help="Adaptation iterations per chain.")
@click.option("--chains", default=4, show_default=True, help="Independent chains.")
@click.option("--leapfrog-steps", default=32, show_default=True, help="Mean leapfrog steps (jittered by 20%).")
@click.option("--target-accept", default=0.8, show_default=True, help="Dual-averaging acceptance target.")
@click.option("--seed", default=0, show_default=True, help="Sampler seed; chain c uses streams derived from (seed, c).")
@click.option("--jobs", default=1, show_default=True, help="Processes for running chains.")
@click.option("--shared-slopes/--per-model-slopes", default=True, show_default=True, help="One covariate slope vector for all outcome models.")
@click.option("--stratum-prior-sd", default=2.5, show_default=True, help="Normal prior sd of stratum coefficients.")
@click.option("--outcome-prior-sd", default=2.0, show_default=True, help="Normal prior sd of outcome coefficients.")
@click.option("--strict", is_flag=True, help="Exit 3 if R-hat exceeds --rhat-max or too many transitions diverge.")
@click.option("--rhat-max", default=1.05, show_default=True, help="R-hat threshold used by --strict.")
@_guard
def fit(data, schema, standardize, out, iters, warmup, chains, leapfrog_steps, target_accept, seed, jobs,
        shared_slopes, stratum_prior_sd, outcome_prior_sd, strict, rhat_max):
    """Sample the posterior by HMC and write draws plus a run manifest."""
    started = time.perf_counter()
    params = click.get_current_context().params
    d = _load(data, schema, bool(standardize))
    cfg = HmcConfig(iterations=iters, warmup=warmup, chains=chains, leapfrog_steps=leapfrog_steps,
                    target_accept=target_accept, seed=seed, n_jobs=jobs)
    layout = BlockLayout.for_dataset(d, shared_slopes)
    dr = run_hmc(d, PriorSpec(stratum_prior_sd, outcome_prior_sd), cfg, layout)
    paths = write_draws(dr, out)
    dg = diagnose(dr.draws, dr.names()) if dr.n_draws >= 4 else None
    summary = dg.summary() if dg else {"max_rhat": None, "min_ess": None, "warnings": ["too few draws"]}
    summary.update(
        divergences=dr.divergences.tolist(),
        accept_rates=dr.accept_rates.tolist(),
        step_sizes=dr.step_sizes.tolist(),
        sampler_warnings=dr.warnings,
    )
    m = _base_manifest("fit", params, started)
    m.update(
        dataset={"path": str(data), "sha256": sha256_file(data), "N": d.N, "K": d.K, "T": d.T,
                 "schema": schema, "standardize": bool(standardize)},
        seeds={"seed": seed, "init": [[seed, c] for c in range(chains)], "transitions": [[seed, c, 1] for c in range(chains)]},
        diagnostics=summary,
        paths=paths,
    )
    manifest_path = sidecar(out, ".manifest.json")
    write_manifest(manifest_path, m)
    rhat = summary["max_rhat"]
    click.echo(f"wrote {dr.n_draws} x {dr.n_chains} draws to {out}; max R-hat {rhat if rhat is None else round(rhat, 4)}")
    if strict:
        bad = []
        if rhat is None or not np.isfinite(rhat) or rhat > rhat_max:
            bad.append(f"max R-hat {rhat} exceeds {rhat_max}")
        if dr.warnings:
            bad.extend(dr.warnings)
        if bad:
            click.echo("diagnostics failed: " + "; ".join(bad), err=True)
            sys.exit(EXIT_DIAGNOSTICS)


def post_options(fn):
    fn = click.option("--thin", default=None, type=int, help="Use at most this many evenly spaced draws.")(fn)
    fn = click.option("--seed", default=0, show_default=True, help="Imputation / replication seed.")(fn)
    fn = data_options(fn)
    fn = click.option("--data", type=click.Path(exists=True, dir_okay=False), help="Panel CSV [default: from the fit manifest].")(fn)
    fn = click.option("--draws", required=True, type=click.Path(exists=True, dir_okay=False), help="Draws CSV from fit.")(fn)
    return fn


def _sace_rows(table, s=None, t_prime=None):
    rows = [e.row() for (ss, tt), e in sorted(table.items()) if (s is None or ss == s) and (t_prime is None or tt == t_prime)]
    return rows


def _emit(obj, out, fmt):
    if fmt == "json":
        text = json.dumps(obj, indent=2) + "\n"
    else:
        rows = obj if isinstance(obj, list) else [r for v in obj.values() if isinstance(v, list) for r in v]
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n", extrasaction="ignore")
        wr.writeheader()
        wr.writerows(rows)
        text = buf.getvalue()
    Path(out).write_text(text)
    return text


@main.command()
@post_options
@click.option("--estimand", type=click.Choice(["sace", "strata", "diagnostics", "all"]), default="all", show_default=True)
@click.option("--s", "horizon", type=int, help="Only SACEs conditioning on always-survival through s.")
@click.option("--t-prime", type=int, help="Only SACEs at this period.")
@click.option("--mode", type=click.Choice(MODES), default="finite", show_default=True, help="finite: impute strata and missing outcomes; super: model-based population average.")
@click.option("--out", default="summary.json", show_default=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@_guard
def summarize(draws, data, schema, standardize, seed, thin, estimand, horizon, t_prime, mode, out, fmt):
    """Posterior summaries of strata proportions, SACEs and diagnostics."""
    started = time.perf_counter()
    params = click.get_current_context().params
    dr, d, ds = _draws_and_data(draws, data, schema, standardize)
    if horizon is not None and not 1 <= horizon <= d.T:
        raise InputError(f"--s must lie in 1..{d.T}")
    result = {}
    if estimand in ("strata", "all"):
        result["strata"] = stratum_proportions(d, dr, thin).rows()
    if estimand in ("sace", "all"):
        result["sace"] = _sace_rows(sace_table(d, dr, mode, seed, thin), horizon, t_prime)
    if estimand in ("diagnostics", "all"):
        result["diagnostics"] = diagnose(dr.draws, dr.names()).rows()
    text = _emit(result if fmt == "json" or len(result) > 1 else next(iter(result.values())), out, fmt)
    m = _base_manifest("summarize", params, started)
    m.update(dataset=ds, seeds={"imputation": seed}, paths={"summary": out, "draws": draws})
    write_manifest(sidecar(out, ".manifest.json"), m)
    if fmt == "csv":
        click.echo(text, nl=False)
    else:
        click.echo(f"wrote {out}")


@main.command()
@post_options
@click.option("--out", default="ppc.json", show_default=True, type=click.Path(dir_okay=False))
@_guard
def ppc(draws, data, schema, standardize, seed, thin, out):
    """Posterior predictive checks of survival and hiring rates."""
    started = time.perf_counter()
    params = click.get_current_context().params
    dr, d, ds = _draws_and_data(draws, data, schema, standardize)
    rep = posterior_predictive(d, dr, thin_to=200 if thin is None else thin, seed=seed)
    Path(out).write_text(json.dumps(rep.to_json(), indent=2) + "\n")
    m = _base_manifest("ppc", params, started)
    m.update(dataset=ds, seeds={"replication": seed}, paths={"ppc": out, "draws": draws})
    write_manifest(sidecar(out, ".manifest.json"), m)
    click.echo(f"{'statistic':<10}{'w':>3}{'t':>3}{'observed':>10}{'rep mean':>10}{'p':>7}")
    for r in rep.rows():
        click.echo(f"{r['statistic']:<10}{r['w']:>3}{r['t']:>3}{r['observed']:>10.3f}{r['replicated_mean']:>10.3f}{r['p_value']:>7.3f}")
    click.echo(f"share of p-values in [0.05, 0.95]: {rep.calibrated_share():.3f}")


@main.command()
@post_options
@click.option("--mode", type=click.Choice(MODES), default="finite", show_default=True)
@click.option("--out", default="report.json", show_default=True, type=click.Path(dir_okay=False), help="JSON report.")
@click.option("--text", "text_out", type=click.Path(dir_okay=False), help="Also write the text rendering here.")
@_guard
def report(draws, data, schema, standardize, seed, thin, mode, out, text_out):
    """Stratum and SACE tables as JSON and text."""
    started = time.perf_counter()
    params = click.get_current_context().params
    dr, d, ds = _draws_and_data(draws, data, schema, standardize)
    dg = diagnose(dr.draws, dr.names()) if dr.n_chains >= 2 and dr.n_draws >= 4 else None
    rep = build_report(d, dr, mode, seed, thin, dg)
    validate_report(rep)
    Path(out).write_text(json.dumps(rep, indent=2) + "\n")
    text = render_text(rep)
    paths = {"report": out, "draws": draws}
    if text_out:
        Path(text_out).write_text(text)
        paths["text"] = text_out
    m = _base_manifest("report", params, started)
    m.update(dataset=ds, seeds={"imputation": seed}, paths=paths)
    write_manifest(sidecar(out, ".manifest.json"), m)
    click.echo(text, nl=False)


if __name__ == "__main__":
    main()
