"""Monte Carlo statistics of the zero process.

Every estimator runs a batch of independent trials (one sampled polynomial
each), maps each trial to a number, and reduces in trial order with exactly
rounded summation, so the result does not depend on thread count or schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .ensemble import (AtomDistribution, CoefficientScheme, PolySample, make_atom, make_scheme,
                       moments_match, sample_polynomial)
from .gaussian_oracle import variance_fn
from .rootfind import (DEFAULT_MAX_ITERS, DEFAULT_REL_TOL, ClassificationError, RootSet,
                       classify_real, count_in_disk, count_in_interval, evaluate_log_abs, find_roots)

MAX_CORRELATION_ORDER = 4
KERNEL_KINDS = ("gaussian_bump", "cosine_bump", "indicator_soft")


class SolverFailure(RuntimeError):
    """A trial could not be solved or classified even after a retry."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Test kernels and regions
# ---------------------------------------------------------------------------


def _smooth_cutoff(t: np.ndarray) -> np.ndarray:
    """C-infinity bump ``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero outside."""
    out = np.zeros_like(t, dtype=float)
    inside = t < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity transition from 1 at ``t <= 0`` to 0 at ``t >= 1``."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
        b = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class TestKernel:
    """Radial test function ``scale * g(|z - center|)``, zero beyond ``support_radius``.

    * ``gaussian_bump``: ``exp(-r^2 / 2h^2)`` times a smooth cutoff at the support.
    * ``cosine_bump``: ``(1 + cos(π r / R)) / 2``.
    * ``indicator_soft``: 1 up to ``support_radius - bandwidth``, then a smooth
      step down to 0 over a band of width ``bandwidth``.
    """

    __test__ = False  # not a pytest class

    kind: str
    center: complex
    bandwidth: float
    support_radius: float
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not (self.bandwidth > 0 and self.support_radius > 0):
            raise ValueError("bandwidth and support_radius must be positive")
        if self.kind == "indicator_soft" and self.bandwidth > self.support_radius:
            raise ValueError("indicator_soft needs bandwidth <= support_radius")

    @classmethod
    def gaussian_bump(cls, center, bandwidth: float, support_radius: float | None = None):
        return cls("gaussian_bump", complex(center), bandwidth,
                   4.0 * bandwidth if support_radius is None else support_radius)

    @classmethod
    def cosine_bump(cls, center, radius: float):
        return cls("cosine_bump", complex(center), radius, radius)

    @classmethod
    def indicator_soft(cls, center, radius: float, edge: float):
        return cls("indicator_soft", complex(center), edge, radius + edge)

    def profile(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        R = self.support_radius
        if self.kind == "gaussian_bump":
            val = np.exp(-0.5 * (r / self.bandwidth) ** 2) * _smooth_cutoff(r / R)
        elif self.kind == "cosine_bump":
            val = np.where(r < R, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, R) / R)), 0.0)
        else:
            inner = R - self.bandwidth
            val = _smooth_step((r - inner) / self.bandwidth)
        return self.scale * val

    def __call__(self, z):
        return self.profile(np.abs(np.asarray(z) - self.center))

    def mass(self, dim: int) -> float:
        """``∫ φ`` over ``ℝ`` (``dim=1``) or ``ℂ`` (``dim=2``)."""
        R = self.support_radius
        pts = np.linspace(0.0, R, 9)
        if dim == 1:
            g = lambda r: float(self.profile(r))  # noqa: E731
            return 2.0 * math.fsum(integrate.quad(g, a, b, epsabs=0, epsrel=1e-12)[0]
                                   for a, b in zip(pts[:-1], pts[1:]))
        if dim == 2:
            g = lambda r: float(self.profile(r)) * r  # noqa: E731
            return 2.0 * math.pi * math.fsum(integrate.quad(g, a, b, epsabs=0, epsrel=1e-12)[0]
                                             for a, b in zip(pts[:-1], pts[1:]))
        raise ValueError("dim must be 1 or 2")

    def unit_mass(self, dim: int) -> "TestKernel":
        """Rescaled copy with ``∫ φ = 1`` in dimension ``dim``."""
        m = self.mass(dim) / self.scale
        return TestKernel(self.kind, self.center, self.bandwidth, self.support_radius, 1.0 / m)

    def reflected(self) -> "TestKernel":
        """The kernel moved to the conjugate center."""
        c = self.center
        return TestKernel(self.kind, c.conjugate(), self.bandwidth, self.support_radius, self.scale)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": [self.center.real, self.center.imag],
                "bandwidth": self.bandwidth, "support_radius": self.support_radius, "scale": self.scale}


@dataclass(frozen=True)
class Interval:
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if self.a > self.b:
            raise ValueError("interval needs a <= b")

    real = True

    def count(self, rs: RootSet) -> int:
        return count_in_interval(rs, self.a, self.b)

    def to_dict(self) -> dict:
        return {"interval": [_tok(self.a), _tok(self.b)]}


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")

    real = False

    def count(self, rs: RootSet) -> int:
        return count_in_disk(rs, self.center, self.radius)

    def to_dict(self) -> dict:
        c = complex(self.center)
        return {"disk": {"center": [c.real, c.imag], "radius": self.radius}}


def _tok(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    scheme: CoefficientScheme
    atom: AtomDistribution
    rel_tol: float = DEFAULT_REL_TOL
    max_iters: int = DEFAULT_MAX_ITERS

    @property
    def is_real(self) -> bool:
        return self.atom.is_real

    @property
    def n(self) -> int:
        return self.scheme.n

    def polynomial(self, seed: int, trial: int) -> PolySample:
        return sample_polynomial(self.scheme, self.atom, seed, trial)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.to_dict(), "atom": self.atom.to_dict(),
                "rel_tol": self.rel_tol, "max_iters": self.max_iters}

    @property
    def digest(self) -> str:
        return digest_of(self.to_dict())


@dataclass(frozen=True)
class FixedPolynomial:
    """A deterministic polynomial, returned unchanged for every trial.

    ``scheme`` optionally names the ensemble whose variance function is used
    by :func:`concentration_deviation`.
    """

    coeffs: tuple
    scheme: CoefficientScheme | None = None
    rel_tol: float = DEFAULT_REL_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    _sample: PolySample = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = tuple(complex(x) for x in self.coeffs)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "_sample", PolySample.from_coeffs(np.array(c)))

    @property
    def is_real(self) -> bool:
        return all(c.imag == 0 for c in self.coeffs)

    @property
    def n(self) -> int:
        return len(self.coeffs) - 1

    def polynomial(self, seed: int, trial: int) -> PolySample:
        return self._sample

    def to_dict(self) -> dict:
        out = {"coeffs": [[c.real, c.imag] for c in self.coeffs],
               "rel_tol": self.rel_tol, "max_iters": self.max_iters}
        if self.scheme is not None:
            out["scheme"] = self.scheme.to_dict()
        return out

    @property
    def digest(self) -> str:
        return digest_of(self.to_dict())


# ---------------------------------------------------------------------------
# Estimates and the trial engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StatEstimate:
    value: float | complex
    stderr: float
    trials: int
    config_digest: str
    label: str = ""

    def within(self, target: float, k: float = 3.0) -> bool:
        """``|value - target| <= k * stderr``."""
        return abs(self.value - target) <= k * self.stderr

    def to_row(self) -> dict:
        return {"label": self.label, "value": self.value, "stderr": self.stderr,
                "trials": self.trials, "config_digest": self.config_digest}


def exact_mean(values: Sequence) -> float | complex:
    """Mean with exactly rounded summation (independent of order)."""
    v = np.asarray(values)
    if v.size and np.all(v == v.flat[0]):
        return v.flat[0].item()
    if np.iscomplexobj(v):
        return complex(math.fsum(v.real), math.fsum(v.imag)) / v.size
    return math.fsum(v) / v.size


def summarize(values: Sequence, digest: str, label: str) -> StatEstimate:
    v = np.asarray(values)
    if v.size < 2:
        raise ValueError("an estimate needs at least 2 trials")
    mean = exact_mean(v)
    ss = math.fsum(np.abs(v - mean) ** 2)
    sd = math.sqrt(ss / (v.size - 1))
    return StatEstimate(mean, sd / math.sqrt(v.size), int(v.size), digest, label)


def solve_trial(cfg, seed: int, trial: int, classify: bool = False) -> tuple[PolySample, RootSet]:
    """Sample and solve one trial.

    A run that exhausts its sweep budget, or whose roots fail conjugate
    classification, is retried once with a 20-fold budget and the tightest
    tolerance; persistent failure raises :class:`SolverFailure`.
    """
    poly = cfg.polynomial(seed, trial)
    attempts = ((cfg.rel_tol, cfg.max_iters), (min(cfg.rel_tol, 1e-14), 20 * cfg.max_iters))
    err = None
    for tol, iters in attempts:
        rs = find_roots(poly, tol, iters)
        if not rs.converged:
            err = f"no convergence after {iters} sweeps"
            continue
        if not classify:
            return poly, rs
        try:
            return poly, classify_real(rs)
        except ClassificationError as exc:
            err = str(exc)
    raise SolverFailure(f"trial {trial} (seed {seed}): {err}")


def run_trials(fn: Callable[[int], object], trials: int, threads: int = 1) -> list:
    """``[fn(t) for t in range(trials)]``, optionally on a thread pool, in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials), chunksize=max(1, trials // (8 * threads))))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Per-trial scalar ``fn(poly, roots)``; ``roots`` is None unless requested."""

    fn: Callable[[PolySample, RootSet | None], float]
    label: str
    needs_roots: bool = True
    needs_classification: bool = False

    def evaluate(self, cfg, seed: int, trial: int):
        if not self.needs_roots:
            return self.fn(cfg.polynomial(seed, trial), None)
        poly, rs = solve_trial(cfg, seed, trial, self.needs_classification)
        return self.fn(poly, rs)


def count_observable(region) -> Observable:
    real = isinstance(region, Interval)
    return Observable(lambda p, rs: region.count(rs), f"count{canonical_json(region.to_dict())}",
                      True, real)


def linear_statistic_observable(kernel: TestKernel, z: complex = 0.0) -> Observable:
    return Observable(lambda p, rs: linear_statistic(rs, z, kernel).real,
                      f"linear[{kernel.kind}@{kernel.center}]")


def log_abs_observable(z: complex, fn: Callable[[float], float] | None = None) -> Observable:
    g = fn if fn is not None else (lambda v: v)
    return Observable(lambda p, rs: g(evaluate_log_abs(p, z)), f"logabs@{z}", needs_roots=False)


def estimate_observable(cfg, observable: Observable, trials: int, seed: int,
                        threads: int = 1) -> StatEstimate:
    vals = run_trials(lambda t: observable.evaluate(cfg, seed, t), trials, threads)
    return summarize(vals, cfg.digest, observable.label)


# ---------------------------------------------------------------------------
# Correlation estimators
# ---------------------------------------------------------------------------


def _set_partitions(items: list) -> Iterable[list[list]]:
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]
        yield [[head]] + part


_PARTITIONS = {k: [(math.prod((-1) ** (len(b) - 1) * math.factorial(len(b) - 1) for b in p),
                    [tuple(b) for b in p])
                   for p in _set_partitions(list(range(k)))]
               for k in range(1, MAX_CORRELATION_ORDER + 1)}


def distinct_index_sum(values: Sequence[np.ndarray]):
    """``Σ_{i_1..i_k distinct} values[0][i_1] ... values[k-1][i_k]``.

    Expanded by Möbius inversion over set partitions of ``{1..k}``: each block
    contributes the plain sum of the product of its kernels, weighted by
    ``(-1)^{|B|-1} (|B|-1)!``.
    """
    k = len(values)
    if k == 0:
        return 1.0
    if k > MAX_CORRELATION_ORDER:
        raise ValueError(f"distinct-index sums supported up to k = {MAX_CORRELATION_ORDER}")
    vals = [np.asarray(v) for v in values]
    total = 0.0
    for mu, blocks in _PARTITIONS[k]:
        term = mu
        for b in blocks:
            prod = vals[b[0]]
            for j in b[1:]:
                prod = prod * vals[j]
            term = term * prod.sum()
        total = total + term
    return total


def linear_statistic(root_set: RootSet, z: complex, kernel: TestKernel) -> complex:
    """``X_{z,G} = Σ_i G(ζ_i - z)`` over finite roots; roots at infinity add 0."""
    return complex(np.sum(kernel(np.asarray(root_set.finite_roots) - z)))


def estimate_correlation_k(cfg, kernels: Sequence[TestKernel], trials: int, seed: int,
                           threads: int = 1) -> StatEstimate:
    """MC estimate of ``E Σ_{distinct} φ_1(ζ_{i_1}) ... φ_k(ζ_{i_k})`` over all finite roots."""
    k = len(kernels)
    if not 1 <= k <= MAX_CORRELATION_ORDER:
        raise ValueError(f"k must lie in 1..{MAX_CORRELATION_ORDER}")

    def one(t):
        _, rs = solve_trial(cfg, seed, t)
        return float(np.real(distinct_index_sum([kern(rs.finite_roots) for kern in kernels])))

    return summarize(run_trials(one, trials, threads), cfg.digest, f"rho^({k})")


def mixed_statistic(rs: RootSet, real_kernels: Sequence[TestKernel],
                    complex_kernels: Sequence[TestKernel]) -> float:
    """Double distinct-index sum over real zeros and upper half-plane zeros.

    A complex kernel centred below the axis is reflected, which is the same
    as evaluating it at the conjugate root.
    """
    up_kernels = [k.reflected() if k.center.imag < 0 else k for k in complex_kernels]
    real_part = distinct_index_sum([k(rs.real_roots) for k in real_kernels])
    up_part = distinct_index_sum([k(rs.upper_half_roots) for k in up_kernels])
    return float(np.real(real_part * up_part))


def estimate_mixed_correlation(cfg, real_kernels: Sequence[TestKernel],
                               complex_kernels: Sequence[TestKernel], trials: int, seed: int,
                               threads: int = 1) -> StatEstimate:
    """MC estimate of the mixed ``(k, l)`` correlation integral for real coefficients."""
    if not cfg.is_real:
        raise ValueError("mixed correlations need real coefficients")
    k, l = len(real_kernels), len(complex_kernels)
    if k + l == 0 or k + l > MAX_CORRELATION_ORDER:
        raise ValueError(f"need 1 <= k + l <= {MAX_CORRELATION_ORDER}")

    def one(t):
        _, rs = solve_trial(cfg, seed, t, classify=True)
        return mixed_statistic(rs, real_kernels, complex_kernels)

    return summarize(run_trials(one, trials, threads), cfg.digest, f"rho^({k},{l})")


# ---------------------------------------------------------------------------
# Counts, concentration and universality
# ---------------------------------------------------------------------------


def variance_estimate(values: Sequence[float], digest: str, label: str) -> StatEstimate:
    """Sample variance with delta-method stderr ``sqrt((m4 - s^4 (N-3)/(N-1)) / N)``."""
    v = np.asarray(values, dtype=float)
    N = v.size
    if N < 4:
        raise ValueError("a variance estimate needs at least 4 trials")
    mean = math.fsum(v) / N
    d = v - mean
    s2 = math.fsum(d * d) / (N - 1)
    m4 = math.fsum(d**4) / N
    var_s2 = (m4 - s2 * s2 * (N - 3) / (N - 1)) / N
    return StatEstimate(s2, math.sqrt(max(var_s2, 0.0)), N, digest, label)


def estimate_counts(cfg, region, trials: int, seed: int,
                    threads: int = 1) -> tuple[StatEstimate, StatEstimate]:
    """Mean and variance of the number of zeros in ``region`` (Interval or Disk)."""
    if isinstance(region, Interval) and not cfg.is_real:
        raise ValueError("real-axis counts need real coefficients")
    obs = count_observable(region)
    vals = run_trials(lambda t: obs.evaluate(cfg, seed, t), trials, threads)
    return (summarize(vals, cfg.digest, "mean " + obs.label),
            variance_estimate(vals, cfg.digest, "var " + obs.label))


@dataclass(frozen=True)
class ConcentrationSummary:
    median: float
    q01: float
    q99: float
    exceed_fraction: float
    zero_fraction: float
    threshold: float
    values: np.ndarray = field(repr=False)


def concentration_deviation(cfg, z: complex, trials: int, seed: int, threshold: float = 5.0,
                            threads: int = 1) -> ConcentrationSummary:
    """Quantiles of ``D = log|f(z)| - ½ log V(z)``.

    ``D = -inf`` marks an exact zero of ``f`` at ``z``; such trials count
    both as exceedances and in ``zero_fraction``.
    """
    scheme = cfg.scheme
    if scheme is None:
        raise ValueError("a reference scheme is needed for V(z)")
    half_log_v = 0.5 * variance_fn(scheme, z)
    if half_log_v == -math.inf:
        raise ValueError(f"V({z}) = 0")
    vals = np.array(run_trials(lambda t: evaluate_log_abs(cfg.polynomial(seed, t), z), trials,
                               threads)) - half_log_v
    q = np.quantile(vals, [0.5, 0.01, 0.99], method="inverted_cdf")
    return ConcentrationSummary(float(q[0]), float(q[1]), float(q[2]),
                                float(np.mean(np.abs(vals) > threshold)),
                                float(np.mean(vals == -math.inf)), threshold, vals)


def universality_gap(cfg_a, cfg_b, observable: Observable, trials: int, seed: int,
                     threads: int = 1) -> StatEstimate:
    """Difference of MC means of ``observable`` with Welch-pooled stderr.

    Use :meth:`StatEstimate.within` with target 0 for the 3σ verdict.
    """
    if cfg_a.scheme != cfg_b.scheme:
        raise ValueError("universality comparison needs a common scheme and n")
    if not moments_match(cfg_a.atom, cfg_b.atom, 2):
        warnings.warn("atoms do not match moments to second order", stacklevel=2)
    ea = estimate_observable(cfg_a, observable, trials, seed, threads)
    eb = estimate_observable(cfg_b, observable, trials, seed, threads)
    return StatEstimate(ea.value - eb.value, math.hypot(ea.stderr, eb.stderr), trials,
                        digest_of([cfg_a.to_dict(), cfg_b.to_dict()]), "gap " + observable.label)


# ---------------------------------------------------------------------------
# Monte Carlo integration with a Chebyshev bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloIntegral:
    value: float
    second_moment: float
    m: int

    def bound(self, delta: float) -> float:
        """Deviation exceeded with probability at most ``delta`` (Chebyshev)."""
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        return math.sqrt(self.second_moment / (self.m * delta))


def monte_carlo_integral(sampler: Callable[[np.random.Generator, int], np.ndarray],
                         integrand: Callable[[np.ndarray], np.ndarray], m: int,
                         seed: int) -> MonteCarloIntegral:
    """Empirical average of ``integrand`` at ``m`` iid points from ``sampler``.

    ``second_moment`` is the empirical ``(1/m) Σ (F - S)^2``, which stands in
    for ``∫ (F - ∫F)^2`` in the Chebyshev bound.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    vals = np.asarray(integrand(sampler(rng, m)), dtype=float)
    s = math.fsum(vals) / m
    d = vals - s
    return MonteCarloIntegral(s, math.fsum(d * d) / m, m)


def uniform_disk_sampler(center: complex = 0.0, radius: float = 1.0):
    def draw(rng, m):
        u = rng.random((2, m))
        return center + radius * np.sqrt(u[0]) * np.exp(2j * math.pi * u[1])
    return draw


def uniform_interval_sampler(a: float, b: float):
    return lambda rng, m: rng.uniform(a, b, m)


def ensemble_config(kind: str, n: int, atom: str = "gaussian_real", **params) -> EnsembleConfig:
    """Shorthand for an :class:`EnsembleConfig` from names."""
    return EnsembleConfig(make_scheme(kind, n, **params), make_atom(atom))
