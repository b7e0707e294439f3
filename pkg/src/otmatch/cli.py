"""Batch command-line interface.

Every command writes its outputs atomically plus a JSON run manifest.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure;
failures emit a machine-readable JSON object on stderr.
"""

import functools
import json
import sys
import time

import click
import numpy as np

from . import __version__
from .dgp import preset, run_monte_carlo, simulate, technology_sweep
from .diagnostics import decompose_counterfactual, mardia_test, summary_stats
from .errors import DataError, DimensionError, DomainError, NumericalError
from .estimators import (
    estimate_sigma0,
    report_from_json,
    sgls_fit,
    sls_fit,
    sml_fit,
    variance_theta,
)
from .gaussian import ml_fit
from .io import atomic_write, parse_matched_csv, write_manifest, write_matched_csv
from .ot import ProductionTech, build_surplus_matrix, solve_assignment

_PRESETS = ("table3", "table4-gamma", "table4-joint", "table5", "appendixC")


def _fail(code, kind, exc):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _guarded(fn):
    """Map package exceptions onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DataError, DomainError, DimensionError, OSError) as exc:
            _fail(2, "data", exc)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            _fail(3, "numerical", exc)
        except ValueError as exc:
            _fail(1, "usage", exc)

    return wrapper


def _manifest_opts(fn):
    fn = click.option("--manifest", type=click.Path(), default=None,
                      help="Write a JSON run manifest to this path.")(fn)
    return fn


def _finish(manifest, command, config, started):
    if manifest:
        write_manifest(manifest, command, config, started)


@click.group()
@click.version_option(__version__)
def cli():
    """Matching-model simulation, estimation, and diagnostics."""


def _tech_options(fn):
    for name, default in (
        ("--beta-m", -0.4),
        ("--beta-c", 1.7),
        ("--alpha-mm", 0.2),
        ("--alpha-cc", 0.5),
    ):
        fn = click.option(name, type=float, default=default, show_default=True)(fn)
    return fn


def _build_tech(alpha_cc, alpha_mm, beta_c, beta_m):
    return ProductionTech.diagonal(alpha_cc, alpha_mm, beta_c, beta_m)


@cli.command("simulate")
@click.option("--preset", "preset_name", type=click.Choice(_PRESETS), required=True)
@click.option("--n", type=int, default=None, help="Override the preset sample size.")
@click.option("--seed", type=int, required=True)
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def simulate_cmd(preset_name, n, seed, output, manifest):
    """Draw one noisy matched sample from a named design."""
    started = time.time()
    cfg = preset(preset_name, n=n, seed=seed)
    sample = simulate(cfg)
    write_matched_csv(output, sample)
    _finish(manifest, "simulate", {"preset": preset_name, "n": cfg.n, "seed": seed,
                                   "output": output}, started)


@cli.command("solve-ot")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="Matched CSV; the x and y columns are used as the two clouds.")
@_tech_options
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def solve_ot_cmd(input_path, alpha_cc, alpha_mm, beta_c, beta_m, output, manifest):
    """Solve the exact assignment between the sample's x and y clouds."""
    started = time.time()
    sample = parse_matched_csv(input_path)
    tech = _build_tech(alpha_cc, alpha_mm, beta_c, beta_m)
    coupling = solve_assignment(build_surplus_matrix(sample.X, sample.Y, tech))
    with atomic_write(output) as fh:
        fh.write("worker_index,job_index,wage_dual,profit_dual\n")
        for i in range(coupling.n):
            j = int(coupling.permutation[i])
            fh.write(
                f"{i},{j},{float(coupling.worker_dual[i])!r},"
                f"{float(coupling.firm_dual[j])!r}\n"
            )
    _finish(manifest, "solve-ot", {
        "input": input_path, "output": output,
        "tech": [alpha_cc, alpha_mm, beta_c, beta_m],
        "total_surplus": coupling.total_surplus,
    }, started)


@cli.command("estimate")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(["sls", "sgls", "sml", "ml", "ml-star"]),
              default="sls", show_default=True)
@click.option("--degrees", type=(int, int), default=(4, 4), show_default=True)
@click.option("--convexity/--no-convexity", default=True, show_default=True)
@click.option("--se/--no-se", default=True, show_default=True,
              help="Compute sandwich standard errors (sieve methods only).")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Optimizer seed for the ML methods.")
@click.option("--output", type=click.Path(), required=True, help="Report JSON path.")
@_manifest_opts
@_guarded
def estimate_cmd(input_path, method, degrees, convexity, se, seed, output, manifest):
    """Fit one estimator to a matched sample and write the report JSON."""
    started = time.time()
    sample = parse_matched_csv(input_path)
    if method in ("ml", "ml-star"):
        fit = ml_fit(sample.w, sample.X, sample.Y,
                     corrected=(method == "ml-star"), seed=seed)
        payload = {
            "method": method,
            "alpha_cc": fit.alpha_cc, "alpha_mm": fit.alpha_mm,
            "beta_c": fit.beta_c, "beta_m": fit.beta_m, "c": fit.c,
            "sigma": [fit.sigma_w, fit.sigma_c, fit.sigma_m],
            "rho_x": fit.rho_x, "rho_y": fit.rho_y,
            "loglik": fit.loglik, "rho_clamped": fit.rho_clamped,
        }
        with atomic_write(output) as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        fitter = {"sls": sls_fit, "sgls": sgls_fit, "sml": sml_fit}[method]
        report = fitter(sample, degrees=degrees, convexity=convexity)
        if se:
            sigma = estimate_sigma0(sample, report)
            report = variance_theta(report, sample, sigma)
        with atomic_write(output) as fh:
            fh.write(report.to_json())
            fh.write("\n")
    _finish(manifest, "estimate", {
        "input": input_path, "method": method, "degrees": list(degrees),
        "convexity": convexity, "se": se, "seed": seed, "output": output,
    }, started)


@cli.command("mc")
@click.option("--preset", "preset_name", type=click.Choice(_PRESETS), required=True)
@click.option("--n", type=int, default=None, help="Override the preset sample size.")
@click.option("--reps", type=int, default=200, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--estimators", default="sml,sls,sgls", show_default=True,
              help="Comma-separated subset of ml,ml_star,sml,sls,sgls.")
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--degrees", type=(int, int), default=(4, 4), show_default=True)
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def mc_cmd(preset_name, n, reps, seed, estimators, parallelism, degrees, output, manifest):
    """Run the Monte Carlo harness and write the bias/RMSE table."""
    started = time.time()
    cfg = preset(preset_name, n=n, seed=seed)
    names = [s.strip() for s in estimators.split(",") if s.strip()]
    result = run_monte_carlo(cfg, estimators=names, reps=reps,
                             parallelism=parallelism, degrees=degrees)
    names_out = list(result.estimates)
    params = ["alpha_CC", "alpha_MM", "beta_C", "beta_M"]
    with atomic_write(output) as fh:
        fh.write("parameter,statistic," + ",".join(names_out) + "\n")
        for k, p in enumerate(params):
            for stat, fn in (("Bias", result.bias), ("RMSE", result.rmse)):
                cells = ",".join(f"{float(fn(nm)[k])!r}" for nm in names_out)
                fh.write(f"{p},{stat},{cells}\n")
    _finish(manifest, "mc", {
        "preset": preset_name, "n": cfg.n, "reps": reps, "seed": seed,
        "estimators": names, "parallelism": parallelism,
        "degrees": list(degrees), "failures": result.failures, "output": output,
    }, started)


@cli.command("diagnose")
@click.argument("what", type=click.Choice(["mardia", "summary"]))
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--columns", type=click.Choice(["x", "y", "xy"]), default="x",
              show_default=True, help="Which attribute columns to test (mardia).")
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def diagnose_cmd(what, input_path, columns, output, manifest):
    """Run a diagnostic on a matched sample."""
    started = time.time()
    sample = parse_matched_csv(input_path)
    if what == "mardia":
        data = {"x": sample.X, "y": sample.Y,
                "xy": np.hstack([sample.X, sample.Y])}[columns]
        result = mardia_test(data)
        result.to_csv(output)
    else:
        stats = summary_stats(sample)
        with atomic_write(output) as fh:
            json.dump(stats, fh, indent=2)
            fh.write("\n")
    _finish(manifest, "diagnose", {
        "what": what, "input": input_path, "columns": columns, "output": output,
    }, started)


@cli.command("sweep")
@click.option("--preset", "preset_name", type=click.Choice(_PRESETS), default="appendixC",
              show_default=True)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, required=True)
@click.option("--grid", required=True,
              help="Semicolon-separated alpha pairs, e.g. '0.5,0.2;1.0,0.2'.")
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def sweep_cmd(preset_name, n, seed, grid, output, manifest):
    """Wage skewness/variance across complementarity pairs."""
    started = time.time()
    cfg = preset(preset_name, n=n, seed=seed)
    try:
        pairs = [tuple(float(t) for t in chunk.split(",")) for chunk in grid.split(";")]
        if any(len(p) != 2 for p in pairs):
            raise ValueError
    except ValueError:
        raise ValueError(f"malformed grid {grid!r}; expected 'a,b;a,b;...'") from None
    rows = technology_sweep(cfg, pairs)
    with atomic_write(output) as fh:
        fh.write("alpha_CC,alpha_MM,skewness,variance\n")
        for a_cc, a_mm, sk, var in rows:
            fh.write(f"{a_cc!r},{a_mm!r},{sk!r},{var!r}\n")
    _finish(manifest, "sweep", {
        "preset": preset_name, "n": cfg.n, "seed": seed, "grid": grid, "output": output,
    }, started)


@cli.command("decompose")
@click.option("--report-t0", type=click.Path(exists=True), required=True)
@click.option("--report-t1", type=click.Path(exists=True), required=True)
@click.option("--sample-t0", type=click.Path(exists=True), required=True)
@click.option("--sample-t1", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["TaskBiasedOnly", "SkillBiasedOnly",
                                           "DistributionOnly"]), required=True)
@click.option("--output", type=click.Path(), required=True)
@_manifest_opts
@_guarded
def decompose_cmd(report_t0, report_t1, sample_t0, sample_t1, mode, output, manifest):
    """Counterfactual polarization curve between two fitted periods."""
    started = time.time()
    curve = decompose_counterfactual(
        report_from_json(report_t0),
        report_from_json(report_t1),
        parse_matched_csv(sample_t0),
        parse_matched_csv(sample_t1),
        mode,
    )
    curve.to_csv(output)
    _finish(manifest, "decompose", {
        "report_t0": report_t0, "report_t1": report_t1,
        "sample_t0": sample_t0, "sample_t1": sample_t1,
        "mode": mode, "output": output,
    }, started)


def main():
    try:
        cli(prog_name="otmatch", standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        payload = {"error": "usage", "type": type(exc).__name__,
                   "message": exc.format_message()}
        click.echo(json.dumps(payload), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
