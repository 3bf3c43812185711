"""Experiment configuration: YAML in, validated canonical form out."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..ensemble import AtomDistribution, CoefficientScheme, InvalidParameter, make_atom, make_scheme
from ..spectral_stats import Disk, Interval, TestKernel, digest_of

STATISTICS = (
    "counts",
    "correlation",
    "mixed_correlation",
    "concentration",
    "gap",
    "circular_fraction",
    "oracle_integral_real_intensity",
    "oracle_grid",
)
MC_STATISTICS = STATISTICS[:6]
GRID_KINDS = ("rho_10", "rho_01", "rho_1_complex", "edge_profile")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Expectation:
    target: float | None = None
    abs_tol: float | None = None
    rel_tol: float | None = None
    sigmas: float | None = None
    min: float | None = None
    max: float | None = None

    def check(self, value: float, stderr: float = 0.0) -> bool:
        ok = True
        if self.target is not None:
            err = abs(value - self.target)
            if self.abs_tol is not None:
                ok &= err <= self.abs_tol
            if self.rel_tol is not None:
                ok &= err <= self.rel_tol * abs(self.target)
            if self.sigmas is not None:
                ok &= err <= self.sigmas * stderr
        if self.min is not None:
            ok &= value >= self.min
        if self.max is not None:
            ok &= value <= self.max
        return bool(ok)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: CoefficientScheme
    atom: AtomDistribution
    statistic: str
    trials: int = 0
    master_seed: int = 0
    atom_b: AtomDistribution | None = None
    params: Mapping[str, Any] = field(default_factory=dict)
    expect: Expectation | None = None
    output_dir: str = "results"
    name: str = "experiment"

    @property
    def n(self) -> int:
        return self.scheme.n

    def canonical(self) -> dict:
        """Everything that determines the results; parses back to an equal config."""
        scheme = self.scheme.to_dict()
        out = {
            "scheme": scheme,
            "n": scheme.pop("n"),
            "atom": self.atom.to_dict(),
            "statistic": self.statistic,
            "master_seed": self.master_seed,
        }
        if self.trials:
            out["trials"] = self.trials
        out.update(_plain(dict(self.params)))
        if self.atom_b is not None:
            out["atom_b"] = self.atom_b.to_dict()
        if self.expect is not None:
            out["expect"] = self.expect.to_dict()
        return out

    def to_dict(self) -> dict:
        out = self.canonical()
        out["name"] = self.name
        out["output"] = {"dir": self.output_dir}
        return out

    @property
    def digest(self) -> str:
        return digest_of(self.canonical())

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _plain(obj):
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def _number(value, name: str) -> float:
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a sign (1.0e9) and bare inf as strings
        try:
            out = float(value)
        except ValueError:
            raise ConfigError(name, f"expected a number, got {value!r}") from None
        if math.isnan(out):
            raise ConfigError(name, f"expected a number, got {value!r}")
        return out
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return float(value)


def _complex(value, name: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(name, "complex values are written [re, im]")
        return complex(_number(value[0], name), _number(value[1], name))
    return complex(_number(value, name))


def _int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def parse_region(spec, name: str = "region"):
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise ConfigError(name, "expected {interval: [a, b]} or {disk: {center, radius}}")
    (kind, body), = spec.items()
    try:
        if kind == "interval":
            if not isinstance(body, (list, tuple)) or len(body) != 2:
                raise ConfigError(name, "interval is [a, b]")
            return Interval(_number(body[0], name), _number(body[1], name))
        if kind == "disk":
            if not isinstance(body, Mapping) or "radius" not in body:
                raise ConfigError(name, "disk needs center and radius")
            return Disk(_complex(body.get("center", 0.0), name), _number(body["radius"], name))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, str(exc)) from exc
    raise ConfigError(name, f"unknown region kind {kind!r}")


def parse_kernel(spec, name: str, dim: int) -> TestKernel:
    if not isinstance(spec, Mapping):
        raise ConfigError(name, "kernel must be a mapping")
    kind = spec.get("kind")
    center = _complex(spec.get("center", 0.0), name)
    try:
        if "scale" in spec:
            # canonical form written by ExperimentConfig.canonical
            return TestKernel(kind, center, _number(spec.get("bandwidth"), name),
                              _number(spec.get("support_radius"), name), _number(spec["scale"], name))
        if kind == "gaussian_bump":
            k = TestKernel.gaussian_bump(center, _number(spec.get("bandwidth"), name),
                                         spec.get("support_radius"))
        elif kind == "cosine_bump":
            k = TestKernel.cosine_bump(center, _number(spec.get("radius"), name))
        elif kind == "indicator_soft":
            k = TestKernel.indicator_soft(center, _number(spec.get("radius"), name),
                                          _number(spec.get("edge"), name))
        else:
            raise ConfigError(name, f"unknown kernel kind {kind!r}")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from exc
    return k.unit_mass(dim) if spec.get("unit_mass", False) else k


def _scheme(raw: Mapping) -> CoefficientScheme:
    if "scheme" not in raw:
        raise ConfigError("scheme", "missing required field")
    if "n" not in raw:
        raise ConfigError("n", "missing required field")
    n = _int(raw["n"], "n", 0)
    spec = raw["scheme"]
    try:
        if isinstance(spec, Mapping):
            return CoefficientScheme.from_dict({**spec, "n": n})
        return make_scheme(spec, n)
    except (InvalidParameter, TypeError) as exc:
        raise ConfigError("scheme", str(exc)) from exc


def _atom(spec, name: str) -> AtomDistribution:
    try:
        if isinstance(spec, Mapping):
            return AtomDistribution.from_dict(spec)
        return make_atom(spec)
    except (InvalidParameter, TypeError) as exc:
        raise ConfigError(name, str(exc)) from exc


_KNOWN = {"scheme", "n", "atom", "atom_b", "trials", "master_seed", "statistic", "region",
          "kernels", "real_kernels", "complex_kernels", "z", "threshold", "grid", "radius_factor",
          "expect", "output", "name"}


def validate(raw: Mapping) -> ExperimentConfig:
    """Turn a parsed mapping into an :class:`ExperimentConfig` or raise :class:`ConfigError`."""
    if not isinstance(raw, Mapping):
        raise ConfigError("<root>", "configuration must be a mapping")
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    scheme = _scheme(raw)
    stat = raw.get("statistic")
    if stat is None:
        raise ConfigError("statistic", "missing required field")
    if stat not in STATISTICS:
        raise ConfigError("statistic", f"unknown statistic {stat!r}; expected one of {STATISTICS}")
    atom = _atom(raw.get("atom", "gaussian_real"), "atom")
    trials = 0
    if stat in MC_STATISTICS:
        if "trials" not in raw:
            raise ConfigError("trials", "missing required field")
        trials = _int(raw["trials"], "trials", 2)
    elif "trials" in raw:
        trials = _int(raw["trials"], "trials", 1)
    seed = _int(raw.get("master_seed", 0), "master_seed", 0)
    if seed >= 2**64:
        raise ConfigError("master_seed", "must fit in 64 bits")

    params: dict[str, Any] = {}
    atom_b = None
    if stat in ("counts", "circular_fraction", "gap") and "region" in raw:
        params["region"] = parse_region(raw["region"])
    if stat == "counts" and "region" not in params:
        raise ConfigError("region", "counts need a region")
    if stat == "circular_fraction":
        params["radius_factor"] = _number(raw.get("radius_factor", 1.1), "radius_factor")
    if stat == "correlation":
        ks = raw.get("kernels")
        if not isinstance(ks, list) or not 1 <= len(ks) <= 4:
            raise ConfigError("kernels", "give between 1 and 4 kernels")
        params["kernels"] = [parse_kernel(k, f"kernels[{i}]", 2) for i, k in enumerate(ks)]
    if stat == "mixed_correlation":
        rk = raw.get("real_kernels", []) or []
        ck = raw.get("complex_kernels", []) or []
        if not 1 <= len(rk) + len(ck) <= 4:
            raise ConfigError("real_kernels", "need 1 to 4 kernels in total")
        params["real_kernels"] = [parse_kernel(k, f"real_kernels[{i}]", 1) for i, k in enumerate(rk)]
        params["complex_kernels"] = [parse_kernel(k, f"complex_kernels[{i}]", 2)
                                     for i, k in enumerate(ck)]
        if not atom.is_real:
            raise ConfigError("atom", "mixed correlations need a real atom")
    if stat in ("concentration", "gap") and "z" in raw:
        params["z"] = _complex(raw["z"], "z")
    if stat == "concentration":
        if "z" not in params:
            raise ConfigError("z", "concentration needs an evaluation point z")
        params["threshold"] = _number(raw.get("threshold", 5.0), "threshold")
    if stat == "gap":
        if "atom_b" not in raw:
            raise ConfigError("atom_b", "gap needs a second atom")
        atom_b = _atom(raw["atom_b"], "atom_b")
        if ("region" in params) == ("z" in params):
            raise ConfigError("region", "gap needs exactly one of region (count) or z (log-magnitude)")
    if stat == "oracle_grid":
        params["grid"] = _grid(raw.get("grid"))
    if stat in ("oracle_integral_real_intensity", "mixed_correlation") or (
            stat == "counts" and isinstance(params.get("region"), Interval)):
        if not atom.is_real:
            raise ConfigError("atom", f"{stat} on the real line needs a real atom")

    expect = None
    if "expect" in raw:
        e = raw["expect"]
        if not isinstance(e, Mapping):
            raise ConfigError("expect", "must be a mapping")
        bad = sorted(set(e) - set(Expectation.__dataclass_fields__))
        if bad:
            raise ConfigError(f"expect.{bad[0]}", "unknown field")
        expect = Expectation(**{k: _number(v, f"expect.{k}") for k, v in e.items()})
    out = raw.get("output", {}) or {}
    if not isinstance(out, Mapping):
        raise ConfigError("output", "must be a mapping")
    return ExperimentConfig(scheme, atom, stat, trials, seed, atom_b, params, expect,
                            str(out.get("dir", "results")), str(raw.get("name", stat)))


def _grid(spec) -> dict:
    if not isinstance(spec, Mapping):
        raise ConfigError("grid", "oracle_grid needs a grid mapping")
    kind = spec.get("kind", "rho_10")
    if kind not in GRID_KINDS:
        raise ConfigError("grid.kind", f"expected one of {GRID_KINDS}")
    if "points" in spec:
        pts = [_complex(p, "grid.points") for p in spec["points"]]
    else:
        for key in ("lo", "hi", "num"):
            if key not in spec:
                raise ConfigError(f"grid.{key}", "missing required field")
        num = _int(spec["num"], "grid.num", 1)
        lo, hi = _number(spec["lo"], "grid.lo"), _number(spec["hi"], "grid.hi")
        im = _number(spec.get("imag", 0.0), "grid.imag")
        pts = [complex(lo + (hi - lo) * i / max(num - 1, 1), im) for i in range(num)]
    return {"kind": kind, "points": pts}


def parse_text(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError("<parse>", f"{where}: {getattr(exc, 'problem', exc)}") from exc
    return validate(raw if raw is not None else {})


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_text(Path(path).read_text())
