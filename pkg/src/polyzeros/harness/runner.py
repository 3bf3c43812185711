"""Execute experiment configs and persist their results."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import __version__
from .. import gaussian_oracle as go
from ..spectral_stats import (EnsembleConfig, concentration_deviation, count_observable,
                              estimate_correlation_k, estimate_counts, estimate_mixed_correlation,
                              log_abs_observable, run_trials, solve_trial, summarize,
                              universality_gap)
from .config import ExperimentConfig, load_config, validate

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2, 3
ESTIMATE_COLUMNS = ("label", "value", "stderr", "trials", "config_digest")


class ComputeError(RuntimeError):
    """A numerical module failed while running an experiment."""


@dataclass
class RunRecord:
    config_digest: str
    timestamp: str
    results: list[dict]
    passed: bool | None
    version: str = __version__
    name: str = ""
    columns: tuple = field(default=ESTIMATE_COLUMNS)

    @property
    def exit_code(self) -> int:
        return EXIT_FAIL if self.passed is False else EXIT_PASS

    def to_json(self) -> str:
        body = {"config_digest": self.config_digest, "timestamp": self.timestamp,
                "name": self.name, "version": self.version, "passed": self.passed,
                "results": self.results}
        return json.dumps(body, sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _row(label, value, stderr, trials, digest) -> dict:
    return {"label": label, "value": float(value), "stderr": float(stderr), "trials": int(trials),
            "config_digest": digest}


def execute(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[dict], tuple, tuple[float, float]]:
    """Run the declared statistic; returns ``(rows, columns, (primary value, stderr))``."""
    ens = EnsembleConfig(cfg.scheme, cfg.atom)
    p = cfg.params
    d = cfg.digest
    seed, trials, stat = cfg.master_seed, cfg.trials, cfg.statistic
    if stat == "oracle_integral_real_intensity":
        v = go.expected_real_zeros(cfg.scheme)
        return [_row("expected_real_zeros", v, 0.0, 0, d)], ESTIMATE_COLUMNS, (v, 0.0)
    if stat == "oracle_grid":
        return _grid_rows(cfg)
    if stat == "counts":
        mean, var = estimate_counts(ens, p["region"], trials, seed, threads)
        rows = [_row(e.label, e.value, e.stderr, e.trials, d) for e in (mean, var)]
        return rows, ESTIMATE_COLUMNS, (mean.value, mean.stderr)
    if stat == "correlation":
        e = estimate_correlation_k(ens, p["kernels"], trials, seed, threads)
    elif stat == "mixed_correlation":
        e = estimate_mixed_correlation(ens, p["real_kernels"], p["complex_kernels"], trials, seed,
                                       threads)
    elif stat == "gap":
        obs = count_observable(p["region"]) if "region" in p else log_abs_observable(p["z"])
        e = universality_gap(ens, EnsembleConfig(cfg.scheme, cfg.atom_b), obs, trials, seed, threads)
    elif stat == "circular_fraction":
        radius = p["radius_factor"] * math.sqrt(cfg.n)
        vals = run_trials(lambda t: _fraction_inside(ens, seed, t, radius), trials, threads)
        e = summarize(vals, d, f"fraction |z| < {p['radius_factor']} sqrt(n)")
    elif stat == "concentration":
        s = concentration_deviation(ens, p["z"], trials, seed, p["threshold"], threads)
        rows = [_row("median D", s.median, 0.0, trials, d), _row("q01 D", s.q01, 0.0, trials, d),
                _row("q99 D", s.q99, 0.0, trials, d),
                _row(f"P(|D| > {s.threshold:g})", s.exceed_fraction,
                     math.sqrt(s.exceed_fraction * (1 - s.exceed_fraction) / trials), trials, d),
                _row("P(f(z) = 0)", s.zero_fraction,
                     math.sqrt(s.zero_fraction * (1 - s.zero_fraction) / trials), trials, d)]
        return rows, ESTIMATE_COLUMNS, (rows[3]["value"], rows[3]["stderr"])
    else:  # pragma: no cover - validated earlier
        raise ValueError(stat)
    return [_row(e.label, e.value, e.stderr, e.trials, d)], ESTIMATE_COLUMNS, (e.value, e.stderr)


def _fraction_inside(ens, seed, t, radius) -> float:
    _, rs = solve_trial(ens, seed, t)
    return float(np.count_nonzero(np.abs(rs.finite_roots) < radius)) / ens.n


def _grid_rows(cfg: ExperimentConfig):
    g = cfg.params["grid"]
    kind = g["kind"]
    rows = []
    for z in g["points"]:
        if kind == "rho_10":
            v = go.rho10(cfg.scheme, z.real)
            rows.append({"x": z.real, "value": v})
        elif kind == "edge_profile":
            rows.append({"a": z.real, "value": go.kac_edge_profile(z.real)})
        else:
            v = (go.complex_intensity_01(cfg.scheme, z).value if kind == "rho_01"
                 else go.predicted_complex_intensity(cfg.scheme, z))
            rows.append({"re": z.real, "im": z.imag, "value": v})
    for r in rows:
        r.update({"scheme": cfg.scheme.kind, "n": cfg.n})
    cols = tuple(rows[0]) if rows else ("x", "value", "scheme", "n")
    return rows, cols, (rows[0]["value"] if rows else math.nan, 0.0)


def write_csv(path: Path, rows: list[dict], columns) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run_config(cfg: ExperimentConfig, out_dir: str | Path | None = None,
               threads: int = 1) -> RunRecord:
    """Execute ``cfg``, write ``<name>.csv`` and append to ``runs.jsonl`` in ``out_dir``."""
    try:
        rows, cols, (value, stderr) = execute(cfg, threads)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        raise ComputeError(f"{type(exc).__name__}: {exc}") from exc
    passed = None if cfg.expect is None else cfg.expect.check(value, stderr)
    record = RunRecord(cfg.digest, time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), rows,
                       passed, name=cfg.name, columns=cols)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    write_csv(out / f"{cfg.name}.csv", rows, cols)
    with open(out / "runs.jsonl", "a") as fh:
        fh.write(record.to_json() + "\n")
    return record


def run_experiment(config_file: str | Path, out_dir: str | Path | None = None, threads: int = 1,
                   seed: int | None = None, trials: int | None = None) -> RunRecord:
    """Load, optionally override seed/trials, and run a config file."""
    cfg = load_config(config_file)
    if seed is not None or trials is not None:
        raw = cfg.to_dict()
        if seed is not None:
            raw["master_seed"] = seed
        if trials is not None:
            raw["trials"] = trials
        cfg = replace(validate(raw), output_dir=cfg.output_dir, name=cfg.name)
    return run_config(cfg, out_dir, threads)


def roots_rows(cfg: EnsembleConfig, seed: int, trials: int, threads: int = 1) -> list[dict]:
    """One row per finite root, ordered by trial index."""
    def one(t):
        _, rs = solve_trial(cfg, seed, t, classify=cfg.is_real)
        return [{"trial": t, "re": float(z.real), "im": float(z.imag), "n": cfg.n,
                 "scheme": cfg.scheme.kind} for z in rs.finite_roots]
    return [r for rows in run_trials(one, trials, threads) for r in rows]


__all__ = ["ComputeError", "RunRecord", "execute", "run_config", "run_experiment", "roots_rows",
           "write_csv", "EXIT_PASS", "EXIT_FAIL", "EXIT_USAGE", "EXIT_COMPUTE"]
