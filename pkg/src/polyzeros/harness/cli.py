"""Command-line laboratory: ``polyzeros <command> [options]``."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import yaml

from ..gaussian_oracle import DegenerateSpan, ZeroVariance
from ..spectral_stats import EnsembleConfig, SolverFailure, TestKernel, estimate_mixed_correlation
from .config import ConfigError, _atom, _int, _scheme, validate
from .plot import PLOT_KINDS, SchemaMismatch, emit_plot
from .registry import REGISTRY, reproduce
from .runner import (EXIT_COMPUTE, EXIT_FAIL, EXIT_PASS, EXIT_USAGE, ComputeError, RunRecord,
                     roots_rows, run_config, run_experiment, write_csv)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _base(config: str | None) -> dict:
    if config is None:
        return {}
    try:
        raw = yaml.safe_load(Path(config).read_text())
    except yaml.YAMLError as exc:
        _fail(EXIT_USAGE, f"{config}: {exc}")
    if not isinstance(raw, dict):
        _fail(EXIT_USAGE, f"{config}: configuration must be a mapping")
    return raw


def _merge(raw: dict, **kw) -> dict:
    out = dict(raw)
    for k, v in kw.items():
        if v is not None:
            out[k] = v
    return out


def common(fn):
    """Options shared by every experiment command."""
    opts = [
        click.option("--config", "config", type=click.Path(exists=True, dir_okay=False),
                     help="YAML experiment file; command-line options override it."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Master seed."),
        click.option("--trials", type=int, help="Number of Monte Carlo trials."),
        click.option("--threads", type=click.IntRange(1), default=1, show_default=True,
                     help="Worker threads (results do not depend on it)."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--scheme", help="flat | elliptic | elliptic_rescaled | kac | hyperbolic"),
        click.option("--n", "n", type=int, help="Degree bound."),
        click.option("--L", "L", type=float, help="Hyperbolic parameter L."),
        click.option("--atom", help="Atom family (default gaussian_real)."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _raw(config, seed, trials, scheme, n, L, atom, **extra) -> dict:
    raw = _base(config)
    if L is not None:
        kind = scheme or (raw.get("scheme") if isinstance(raw.get("scheme"), str)
                          else (raw.get("scheme") or {}).get("kind"))
        raw["scheme"] = {"kind": kind, "L": L}
    elif scheme is not None:
        raw["scheme"] = scheme
    return _merge(raw, master_seed=seed, trials=trials, n=n, atom=atom, **extra)


def _run(raw: dict, out: str | None, threads: int) -> RunRecord:
    try:
        cfg = validate(raw)
    except ConfigError as exc:
        _fail(EXIT_USAGE, str(exc))
    try:
        rec = run_config(cfg, out, threads)
    except ComputeError as exc:
        _fail(EXIT_COMPUTE, str(exc))
    _print_rows(rec.results, rec.columns)
    if rec.passed is not None:
        click.echo(f"expectation: {'pass' if rec.passed else 'FAIL'}")
    return rec


def _print_rows(rows, cols):
    click.echo("  ".join(cols))
    for r in rows:
        click.echo("  ".join(f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c]) for c in cols))


def _finish(rec: RunRecord):
    sys.exit(rec.exit_code)


def _region(interval, disk) -> dict | None:
    if interval and disk:
        raise click.UsageError("give either --interval or --disk")
    if interval:
        return {"interval": list(interval)}
    if disk:
        return {"disk": {"center": [disk[0], disk[1]], "radius": disk[2]}}
    return None


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Random polynomial zeros: sampling, root finding, Kac-Rice oracles and MC statistics."""


@main.command()
@common
def sample(config, seed, trials, threads, out, scheme, n, L, atom):
    """Write sampled coefficients (trial, i, re, im, log_scale) to coeffs.csv."""
    ens, s, t = _ensemble(_raw(config, seed, trials, scheme, n, L, atom))
    rows = []
    for k in range(t):
        p = ens.polynomial(s, k)
        for i, c in enumerate(p.coeffs):
            rows.append({"trial": k, "i": i, "re": float(c.real), "im": float(c.imag),
                         "log_scale": float(p.log_scale)})
    path = Path(out or "results") / "coeffs.csv"
    write_csv(path, rows, ("trial", "i", "re", "im", "log_scale"))
    click.echo(f"wrote {len(rows)} coefficients to {path}")


def _ensemble(raw: dict) -> tuple[EnsembleConfig, int, int]:
    try:
        scheme = _scheme(raw)
        atom = _atom(raw.get("atom", "gaussian_real"), "atom")
        trials = _int(raw.get("trials", 1), "trials", 1)
        seed = _int(raw.get("master_seed", 0), "master_seed", 0)
    except ConfigError as exc:
        _fail(EXIT_USAGE, str(exc))
    return EnsembleConfig(scheme, atom), seed, trials


@main.command()
@common
def roots(config, seed, trials, threads, out, scheme, n, L, atom):
    """Solve sampled polynomials; one row per root in roots.csv."""
    ens, s, t = _ensemble(_raw(config, seed, trials, scheme, n, L, atom))
    try:
        rows = roots_rows(ens, s, t, threads)
    except (SolverFailure, OverflowError) as exc:
        _fail(EXIT_COMPUTE, str(exc))
    path = Path(out or "results") / "roots.csv"
    write_csv(path, rows, ("trial", "re", "im", "n", "scheme"))
    click.echo(f"wrote {len(rows)} roots from {t} trial(s) to {path}")


@main.command()
@common
@click.option("--interval", nargs=2, type=float, help="Count real zeros in [A, B].")
@click.option("--disk", nargs=3, type=float, help="Count zeros in the disk (RE, IM, R).")
def counts(config, seed, trials, threads, out, scheme, n, L, atom, interval, disk):
    """Mean and variance of zero counts in an interval or disk."""
    _finish(_run(_raw(config, seed, trials, scheme, n, L, atom, statistic="counts",
                      region=_region(interval, disk), name="counts"), out, threads))


@main.command()
@common
@click.option("--kind", type=click.Choice(["rho_10", "rho_01", "rho_1_complex", "edge_profile"]),
              default="rho_10", show_default=True)
@click.option("--lo", type=float, default=-5.0, show_default=True)
@click.option("--hi", type=float, default=5.0, show_default=True)
@click.option("--num", type=int, default=101, show_default=True)
@click.option("--imag", type=float, default=0.0, help="Imaginary part of the grid line.")
@click.option("--mc-points", type=int, default=0, help="Add MC kernel estimates at this many x.")
@click.option("--bandwidth", type=float, default=0.5, show_default=True)
def intensity(config, seed, trials, threads, out, scheme, n, L, atom, kind, lo, hi, num, imag,
              mc_points, bandwidth):
    """Oracle intensity on a grid (intensity.csv), optionally with MC points."""
    raw = _raw(config, seed, trials, scheme, n, L, atom, statistic="oracle_grid", name="intensity",
               grid={"kind": kind, "lo": lo, "hi": hi, "num": num, "imag": imag})
    rec = _run(raw, out, threads)
    if mc_points and kind == "rho_10":
        cfg = validate(raw)
        if cfg.trials < 2:
            _fail(EXIT_USAGE, "--mc-points needs --trials >= 2")
        ens = EnsembleConfig(cfg.scheme, cfg.atom)
        rows = [dict(r, mc_value="", mc_stderr="") for r in rec.results]
        step = max(1, (len(rows) - 1) // max(mc_points - 1, 1))
        for r in rows[::step][:mc_points]:
            k = TestKernel.gaussian_bump(r["x"], bandwidth).unit_mass(1)
            try:
                e = estimate_mixed_correlation(ens, [k], [], cfg.trials, cfg.master_seed, threads)
            except (SolverFailure, OverflowError) as exc:
                _fail(EXIT_COMPUTE, str(exc))
            r["mc_value"], r["mc_stderr"] = e.value, e.stderr
        cols = tuple(rows[0])
        write_csv(Path(out or cfg.output_dir) / "intensity.csv", rows, cols)
        click.echo(f"added MC kernel estimates at {min(mc_points, len(rows[::step]))} points")
    _finish(rec)


def _kernel(spec: str, unit: bool) -> dict:
    parts = spec.split(":")
    try:
        kind, re, im, width = parts[0], float(parts[1]), float(parts[2]), float(parts[3])
    except (IndexError, ValueError):
        raise click.BadParameter(f"kernel {spec!r}: expected KIND:RE:IM:WIDTH[:EDGE]")
    out = {"kind": kind, "center": [re, im], "unit_mass": unit}
    if kind == "gaussian_bump":
        out["bandwidth"] = width
    elif kind == "cosine_bump":
        out["radius"] = width
    else:
        out["radius"] = width
        out["edge"] = float(parts[4]) if len(parts) > 4 else 0.25 * width
    return out


@main.command()
@common
@click.option("--kernel", "kernels", multiple=True, help="Kernel KIND:RE:IM:WIDTH on all zeros.")
@click.option("--real-kernel", "real_kernels", multiple=True, help="Kernel on real zeros (mixed).")
@click.option("--complex-kernel", "complex_kernels", multiple=True,
              help="Kernel on upper half-plane zeros (mixed).")
@click.option("--unit-mass/--raw", default=True, show_default=True)
def correlate(config, seed, trials, threads, out, scheme, n, L, atom, kernels, real_kernels,
              complex_kernels, unit_mass):
    """Smoothed k-point or mixed (k, l) correlation integral."""
    if real_kernels or complex_kernels:
        extra = {"statistic": "mixed_correlation",
                 "real_kernels": [_kernel(k, unit_mass) for k in real_kernels],
                 "complex_kernels": [_kernel(k, unit_mass) for k in complex_kernels]}
    else:
        extra = {"statistic": "correlation", "kernels": [_kernel(k, unit_mass) for k in kernels]}
    _finish(_run(_raw(config, seed, trials, scheme, n, L, atom, name="correlation", **extra),
                 out, threads))


@main.command()
@common
@click.option("--atom-b", required=True, help="Second atom family.")
@click.option("--interval", nargs=2, type=float)
@click.option("--disk", nargs=3, type=float)
@click.option("--z", nargs=2, type=float, help="Compare log|f(z)| instead of a count.")
def compare(config, seed, trials, threads, out, scheme, n, L, atom, atom_b, interval, disk, z):
    """Universality gap between two atoms (difference of MC means, Welch stderr)."""
    raw = _raw(config, seed, trials, scheme, n, L, atom, statistic="gap", atom_b=atom_b,
               region=_region(interval, disk), z=list(z) if z else None, name="gap")
    rec = _run(raw, out, threads)
    row = rec.results[0]
    verdict = abs(row["value"]) <= 3 * row["stderr"]
    click.echo(f"|gap| <= 3 pooled stderr: {'yes' if verdict else 'no'}")
    _finish(rec)


@main.command()
@common
@click.option("--z", nargs=2, type=float, required=True, help="Evaluation point RE IM.")
@click.option("--threshold", type=float, default=5.0, show_default=True)
def concentration(config, seed, trials, threads, out, scheme, n, L, atom, z, threshold):
    """Quantiles of log|f(z)| - ½ log V(z)."""
    _finish(_run(_raw(config, seed, trials, scheme, n, L, atom, statistic="concentration",
                      z=list(z), threshold=threshold, name="concentration"), out, threads))


@main.command(name="reproduce")
@click.argument("experiment_id", required=False)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Override the published seed.")
@click.option("--threads", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Also write the table here.")
@click.option("--list", "list_only", is_flag=True, help="List available experiment ids.")
def reproduce_cmd(experiment_id, seed, threads, out, list_only):
    """Run a registered experiment and print claim / measured / tolerance / verdict."""
    if list_only or experiment_id is None:
        for k, e in sorted(REGISTRY.items()):
            click.echo(f"{k:24s} {e.title}")
        sys.exit(EXIT_PASS if list_only else EXIT_USAGE)
    if experiment_id not in REGISTRY:
        _fail(EXIT_USAGE, f"unknown experiment {experiment_id!r}; available: "
              + ", ".join(sorted(REGISTRY)))
    try:
        rep = reproduce(experiment_id, seed, threads)
    except (SolverFailure, ArithmeticError, DegenerateSpan, ZeroVariance) as exc:
        _fail(EXIT_COMPUTE, str(exc))
    table = rep.table()
    click.echo(table)
    if out:
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        (p / f"{experiment_id}.txt").write_text(table + "\n")
    sys.exit(EXIT_PASS if rep.passed else EXIT_FAIL)


@main.command()
@click.argument("result_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(PLOT_KINDS), required=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), help="SVG path.")
def plot(result_csv, kind, out_file):
    """Render a result CSV as a standalone SVG."""
    try:
        path = emit_plot(result_csv, kind, out_file)
    except SchemaMismatch as exc:
        _fail(EXIT_USAGE, str(exc))
    click.echo(f"wrote {path}")


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1))
@click.option("--trials", type=int)
@click.option("--threads", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False))
def run(config_file, seed, trials, threads, out):
    """Run an experiment file; exit 0 pass, 1 statistical fail, 2 usage, 3 compute error."""
    try:
        rec = run_experiment(config_file, out, threads, seed, trials)
    except ConfigError as exc:
        _fail(EXIT_USAGE, str(exc))
    except ComputeError as exc:
        _fail(EXIT_COMPUTE, str(exc))
    _print_rows(rec.results, rec.columns)
    if rec.passed is not None:
        click.echo(f"expectation: {'pass' if rec.passed else 'FAIL'}")
    _finish(rec)


if __name__ == "__main__":  # pragma: no cover
    main()
