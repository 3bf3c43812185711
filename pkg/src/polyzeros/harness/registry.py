"""Canned experiments with fixed published seeds.

Each entry returns a list of :class:`Check` rows (claim, measured value,
tolerance, verdict).  The acceptance suite runs every entry through
:func:`reproduce`.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal

from .. import gaussian_oracle as go
from ..ensemble import make_atom, make_scheme
from ..rootfind import vieta_check
from ..spectral_stats import (Disk, EnsembleConfig, Interval, TestKernel, concentration_deviation,
                              count_observable, distinct_index_sum, estimate_counts,
                              estimate_mixed_correlation, run_trials, solve_trial, summarize,
                              universality_gap)


@dataclass(frozen=True)
class Check:
    claim: str
    measured: str
    tolerance: str
    passed: bool


@dataclass(frozen=True)
class Report:
    experiment_id: str
    title: str
    seed: int
    checks: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        head = ("claim", "measured", "tolerance", "verdict")
        body = [(c.claim, c.measured, c.tolerance, "pass" if c.passed else "FAIL") for c in self.checks]
        widths = [max(len(r[i]) for r in [head] + body) for i in range(4)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [f"{self.experiment_id}: {self.title}  (seed {self.seed}, {self.seconds:.1f}s)",
                 fmt.format(*head), fmt.format(*("-" * w for w in widths))]
        lines += [fmt.format(*r) for r in body]
        return "\n".join(lines)


@dataclass(frozen=True)
class Entry:
    experiment_id: str
    title: str
    seed: int
    run: Callable[[int, int], list]


class UnknownExperiment(KeyError):
    pass


REGISTRY: dict[str, Entry] = {}


def _register(experiment_id: str, title: str, seed: int):
    def deco(fn):
        REGISTRY[experiment_id] = Entry(experiment_id, title, seed, fn)
        return fn
    return deco


def reproduce(experiment_id: str, seed: int | None = None, threads: int = 1) -> Report:
    if experiment_id not in REGISTRY:
        raise UnknownExperiment(
            f"unknown experiment {experiment_id!r}; available: {', '.join(sorted(REGISTRY))}")
    e = REGISTRY[experiment_id]
    s = e.seed if seed is None else seed
    t0 = time.perf_counter()
    checks = e.run(s, threads)
    return Report(experiment_id, e.title, s, checks, time.perf_counter() - t0)


def _ens(kind: str, n: int, atom: str = "gaussian_real", **params) -> EnsembleConfig:
    return EnsembleConfig(make_scheme(kind, n, **params), make_atom(atom))


def _sigma_check(claim: str, est, target: float, k: float = 3.0) -> Check:
    return Check(claim, f"{est.value:.5f} ± {est.stderr:.5f}", f"{k:g} stderr of {target:.5f}",
                 bool(est.within(target, k)))


def _runtime_check(seconds: float, limit: float) -> Check:
    return Check("runtime", f"{seconds:.1f}s", f"< {limit:g}s", seconds < limit)


# ---------------------------------------------------------------------------
# Entries
# ---------------------------------------------------------------------------


@_register("elliptic-exact", "real zeros of rescaled elliptic polynomials, exact gaussian case", 1)
def _elliptic_exact(seed, threads):
    t0 = time.perf_counter()
    checks = []
    for n in (16, 100, 400):
        v = go.expected_real_zeros(make_scheme("elliptic_rescaled", n))
        rel = abs(v / math.sqrt(n) - 1.0)
        checks.append(Check(f"∫ρ₁₀ = √n, n={n}", f"{v:.10f} (rel {rel:.1e})", "rel 1e-6",
                            rel <= 1e-6))
    return checks + [_runtime_check(time.perf_counter() - t0, 10.0)]


@_register("elliptic-mc", "MC real-zero count of rescaled elliptic polynomials, n=100", 20240602)
def _elliptic_mc(seed, threads):
    t0 = time.perf_counter()
    g, b = _ens("elliptic_rescaled", 100), _ens("elliptic_rescaled", 100, "bernoulli")
    mg, _ = estimate_counts(g, Interval(), 2000, seed, threads)
    gap = universality_gap(g, b, count_observable(Interval()), 2000, seed, threads)
    return [_sigma_check("E N_R = √n (gaussian)", mg, 10.0),
            _sigma_check("bernoulli - gaussian gap", gap, 0.0),
            _runtime_check(time.perf_counter() - t0, 120.0)]


@_register("flat-real-count", "real-zero count of flat polynomials, n=400", 20240603)
def _flat_real_count(seed, threads):
    t0 = time.perf_counter()
    target = 2.0 / math.pi * 20.0
    checks = []
    for atom in ("gaussian_real", "bernoulli"):
        m, _ = estimate_counts(_ens("flat", 400, atom), Interval(), 2000, seed, threads)
        rel = abs(m.value / target - 1.0)
        checks.append(Check(f"E N_R ≈ (2/π)√n ({atom})", f"{m.value:.4f} ± {m.stderr:.4f}",
                            f"within 5% of {target:.4f}", rel <= 0.05))
    exact = go.expected_real_zeros(make_scheme("flat", 400))
    checks.append(Check("exact gaussian E N_R (oracle, context)", f"{exact:.4f}", "informational",
                        True))
    return checks + [_runtime_check(time.perf_counter() - t0, 300.0)]


@_register("flat-bulk-intensity", "constant real bulk intensity 1/π of flat polynomials", 20240604)
def _flat_bulk(seed, threads):
    s = make_scheme("flat", 400)
    checks = []
    for x in (5.0, 10.0, 15.0):
        v = go.rho10(s, x)
        checks.append(Check(f"ρ₁₀({x:g}) = 1/π", f"{v:.8f}", "± 1e-3", abs(v - 1 / math.pi) <= 1e-3))
    k = TestKernel.gaussian_bump(10.0, 1.0).unit_mass(1)
    oracle = go.integrate_against(lambda x: go.rho10(s, x), k, 10 - k.support_radius,
                                  10 + k.support_radius)
    est = estimate_mixed_correlation(EnsembleConfig(s, make_atom("gaussian_real")), [k], [],
                                     4000, seed, threads)
    checks.append(_sigma_check("MC kernel estimate at x=10 = ∫φρ₁₀", est, oracle))
    return checks


@_register("local-circular-law", "zeros of flat polynomials fill B(0, √n)", 20240605)
def _circular(seed, threads):
    cfg = _ens("flat", 400)
    r = 1.1 * 20.0

    def frac(t):
        _, rs = solve_trial(cfg, seed, t)
        return float(np.count_nonzero(np.abs(rs.finite_roots) < r)) / 400

    est = summarize(run_trials(frac, 200, threads), "", "fraction")
    pred = go.expected_zeros_in_disk(cfg.scheme, r) / 400
    return [Check("mean fraction in B(0, 1.1√n)", f"{est.value:.5f} ± {est.stderr:.5f}", ">= 0.99",
                  est.value >= 0.99),
            Check("complex-gaussian Jensen prediction (context)", f"{pred:.5f}", "informational",
                  True)]


def kac_log_growth_ratios(ns=(10**3, 10**4, 10**5)) -> list[float]:
    return [go.expected_real_zeros(make_scheme("kac", n)) / (2 / math.pi * math.log(n)) for n in ns]


@_register("kac-log-growth", "E N_R of Kac polynomials grows like (2/π) log n", 1)
def _kac_growth(seed, threads):
    t0 = time.perf_counter()
    ns = (10**3, 10**4, 10**5)
    ratios = kac_log_growth_ratios(ns)
    checks = [Check(f"ratio to (2/π) log n, n={n}", f"{r:.5f}", "[0.9, 1.4]", 0.9 <= r <= 1.4)
              for n, r in zip(ns, ratios)]
    dec = all(a > b for a, b in zip(ratios, ratios[1:]))
    checks.append(Check("ratios decrease toward 1", " > ".join(f"{r:.4f}" for r in ratios),
                        "strictly decreasing, > 1", dec and ratios[-1] > 1.0))
    return checks + [_runtime_check(time.perf_counter() - t0, 60.0)]


def cauchy_binet_wedge(vs: list) -> float:
    """``|v_1 ∧ ... ∧ v_m|`` as the root sum of squared ``m x m`` minors."""
    a = np.column_stack(vs)
    m = a.shape[1]
    total = math.fsum(np.linalg.det(a[list(rows), :]) ** 2
                      for rows in itertools.combinations(range(a.shape[0]), m))
    return math.sqrt(total)


def slab_density_mc(vs: list, rng, samples: int = 2_000_000, eps_frac: float = 0.05):
    """Fraction of gaussian draws with every ``|X . v_j| < ε_j``, divided by ``Π 2ε_j``."""
    a = np.column_stack(vs)
    eps = eps_frac * np.linalg.norm(a, axis=0)
    hits = 0
    chunk = 250_000
    for start in range(0, samples, chunk):
        x = rng.standard_normal((min(chunk, samples - start), a.shape[0]))
        hits += int(np.count_nonzero(np.all(np.abs(x @ a) < eps, axis=1)))
    vol = float(np.prod(2 * eps))
    p = hits / samples
    return p / vol, math.sqrt(p * (1 - p) / samples) / vol


def projected_abs_moment_mc(v, vs: list, rng, samples: int = 200_000):
    """``E|X . v|`` for ``X`` standard gaussian projected onto ``span(vs)^⊥``."""
    q, _ = np.linalg.qr(np.column_stack(vs))
    x = rng.standard_normal((samples, len(v)))
    x = x - (x @ q) @ q.T
    vals = np.abs(x @ v)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def conditional_abs_moment_quadrature(v, vs: list) -> float:
    """``E(|X . v| | X . v_j = 0)`` by 1-D quadrature of the conditional density.

    The joint law of ``(X . v, X . v_1, ...)`` is centred normal with Gram
    covariance; the conditional density is the joint density on the line
    ``(y, 0, ..., 0)`` divided by the marginal density at the origin.
    """
    a = np.column_stack([v] + list(vs))
    cov = a.T @ a
    joint = multivariate_normal(mean=np.zeros(len(cov)), cov=cov)
    marg = multivariate_normal(mean=np.zeros(len(cov) - 1), cov=cov[1:, 1:]).pdf(np.zeros(len(cov) - 1))
    pad = np.zeros(len(cov) - 1)
    dens = lambda y: joint.pdf(np.concatenate([[y], pad])) / marg  # noqa: E731
    scale = math.sqrt(cov[0, 0])
    half = [integrate.quad(lambda y: abs(y) * dens(y), 0, sgn * 12 * scale, epsabs=0, epsrel=1e-10,
                           limit=200)[0] for sgn in (1, -1)]
    return half[0] - half[1]


@_register("gaussian-identities", "gaussian zero densities and conditional moments", 20240607)
def _gaussian_identities(seed, threads):
    rng = np.random.default_rng(seed)
    worst_minor = worst_quad = 0.0
    mc_misses, failed = [], []
    for inst in range(20):
        m = 1 + inst % 2
        dim = int(rng.integers(m + 1, 11))
        vs = [rng.standard_normal(dim) for _ in range(m)]
        v = rng.standard_normal(dim)

        dens = go.gauss_zero_density(vs)
        minors = (2 * math.pi) ** (-m / 2) / cauchy_binet_wedge(vs)
        a = np.column_stack(vs)
        quad = multivariate_normal(mean=np.zeros(m), cov=a.T @ a).pdf(np.zeros(m))
        worst_minor = max(worst_minor, abs(dens / minors - 1))
        rel_d = abs(dens / quad - 1)
        mc, se = slab_density_mc(vs, rng)
        mc_ok = abs(mc - dens) <= 3 * se
        if not mc_ok:
            mc_misses.append(f"density#{inst}")
        if not (mc_ok or rel_d <= 1e-3):
            failed.append(f"density#{inst}")

        mom = go.conditional_abs_moment(v, vs)
        rel_m = abs(mom / conditional_abs_moment_quadrature(v, vs) - 1)
        mc, se = projected_abs_moment_mc(v, vs, rng)
        mc_ok = abs(mc - mom) <= 3 * se
        if not mc_ok:
            mc_misses.append(f"moment#{inst}")
        if not (mc_ok or rel_m <= 1e-3):
            failed.append(f"moment#{inst}")
        worst_quad = max(worst_quad, rel_d, rel_m)
    return [Check("density = (2π)^{-m/2}/|∧v| vs sum of minors", f"max rel err {worst_minor:.1e}",
                  "rel 1e-3", worst_minor <= 1e-3),
            Check("density and √(2/π)·dist vs quadrature", f"max rel err {worst_quad:.1e}",
                  "rel 1e-3", worst_quad <= 1e-3),
            Check("density and √(2/π)·dist vs MC, 40 comparisons",
                  f"{len(mc_misses)} outside 3 stderr" + (f" ({', '.join(mc_misses)})" if mc_misses else ""),
                  "3 stderr or 1e-3", not failed)]


@_register("repulsion", "level repulsion near the real axis, flat n=100, x=5", 1)
def _repulsion(seed, threads):
    s = make_scheme("flat", 100)
    deltas = (0.2, 0.1, 0.05)
    r20 = [go.real_intensity_2(s, 5.0, 5.0 + d).value / d for d in deltas]
    r01 = [go.complex_intensity_01(s, complex(5.0, d)).value / d for d in deltas]
    out = []
    for name, r in (("ρ₂₀(x, x+δ)/δ", r20), ("ρ₀₁(x+iδ)/δ", r01)):
        bound = 1.5 * r[0]
        out.append(Check(f"{name} bounded as δ → 0", ", ".join(f"{v:.5f}" for v in r),
                         f"<= K = 1.5·value at δ=0.2 ({bound:.4f})", max(r) <= bound))
    return out


@_register("concentration", "concentration of log|f| and Kac zeros at z=1", 20240609)
def _concentration(seed, threads):
    flat = concentration_deviation(_ens("flat", 400), 10.0, 1000, seed, 5.0, threads)
    n = 101
    kac = concentration_deviation(_ens("kac", n, "bernoulli"), 1.0, 100_000, seed, 5.0, threads)
    approx = math.sqrt(2.0 / (math.pi * (n + 1)))
    ratio = kac.zero_fraction / approx
    return [Check("P(|log|f| - ½log V| > 5), flat n=400, |z|=10", f"{flat.exceed_fraction:.4f}",
                  "< 0.01", flat.exceed_fraction < 0.01),
            Check(f"P(f(1)=0) vs normal approx {approx:.5f}, kac bernoulli n={n}",
                  f"{kac.zero_fraction:.5f} (ratio {ratio:.3f})", "factor 2",
                  0.5 <= ratio <= 2.0)]


def distinct_sum_direct(values: list) -> float:
    """Direct enumeration over ordered tuples of distinct indices."""
    k = len(values)
    m = len(values[0]) if k else 0
    return math.fsum(math.prod(values[j][idx[j]] for j in range(k))
                     for idx in itertools.permutations(range(m), k))


def solver_property_suite(instances: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    kinds = ("kac", "flat", "elliptic", "elliptic_rescaled", "hyperbolic")
    atoms = ("gaussian_real", "bernoulli", "uniform_real", "gaussian_complex", "uniform_complex_disk")
    worst = {"residual": 0.0, "vieta_sum": 0.0, "vieta_prod": 0.0}
    bad_conj = bad_degree = 0
    for t in range(instances):
        kind = kinds[int(rng.integers(len(kinds)))]
        atom = atoms[int(rng.integers(len(atoms)))]
        n = int(rng.integers(1, 65))
        params = {"L": 2.0} if kind == "hyperbolic" else {}
        cfg = _ens(kind, n, atom, **params)
        poly, rs = solve_trial(cfg, seed, t, classify=cfg.is_real)
        worst["residual"] = max(worst["residual"], rs.residual_bound)
        if rs.finite_roots.size + rs.roots_at_infinity != n:
            bad_degree += 1
        if rs.roots_at_infinity == 0 and n >= 2:
            es, ep = vieta_check(poly.coeffs, rs.finite_roots)
            worst["vieta_sum"] = max(worst["vieta_sum"], es)
            worst["vieta_prod"] = max(worst["vieta_prod"], ep)
        if cfg.is_real:
            z = np.sort_complex(rs.finite_roots)
            if not np.array_equal(z, np.sort_complex(np.conj(rs.finite_roots))):
                bad_conj += 1
    return {**worst, "bad_conj": bad_conj, "bad_degree": bad_degree}


def inclusion_exclusion_suite(sets: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    exact_fail = 0
    worst = 0.0
    for _ in range(sets):
        m = int(rng.integers(0, 10))
        k = int(rng.integers(1, 5))
        ints = [rng.integers(-3, 4, size=m).astype(float) for _ in range(k)]
        if distinct_index_sum(ints) != distinct_sum_direct(ints):
            exact_fail += 1
        roots = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        kernels = [TestKernel.gaussian_bump(complex(*rng.standard_normal(2)), 1.0) for _ in range(k)]
        vals = [kern(roots) for kern in kernels]
        a, b = distinct_index_sum(vals), distinct_sum_direct(vals)
        scale = math.prod(float(np.abs(v).sum()) for v in vals) or 1.0
        worst = max(worst, abs(a - b) / scale)
    return {"exact_fail": exact_fail, "worst_rel": worst}


def thread_determinism(seed: int, thread_counts=(1, 4, 8)) -> bool:
    from .runner import roots_rows

    cfg = _ens("flat", 100)
    outs = set()
    for th in thread_counts:
        mean, var = estimate_counts(cfg, Interval(-3.0, 3.0), 60, seed, th)
        rows = roots_rows(cfg, seed, 20, th)
        outs.add(repr((mean, var, rows)))
    return len(outs) == 1


@_register("property-suites", "solver, inclusion-exclusion and determinism properties", 20240610)
def _properties(seed, threads):
    s = solver_property_suite(500, seed)
    ie = inclusion_exclusion_suite(100, seed)
    det = thread_determinism(seed)
    return [Check("residual (backward error), 500 instances n ≤ 64", f"{s['residual']:.1e}",
                  "<= 1e-8", s["residual"] <= 1e-8),
            Check("Vieta sum/product", f"{s['vieta_sum']:.1e} / {s['vieta_prod']:.1e}",
                  "rel 1e-6", max(s["vieta_sum"], s["vieta_prod"]) <= 1e-6),
            Check("conjugation closure and degree count", f"{s['bad_conj']} / {s['bad_degree']} bad",
                  "0", s["bad_conj"] == 0 and s["bad_degree"] == 0),
            Check("inclusion-exclusion = direct, 100 sets",
                  f"{ie['exact_fail']} exact mismatches, kernel rel {ie['worst_rel']:.1e}",
                  "exact / 1e-12", ie["exact_fail"] == 0 and ie["worst_rel"] <= 1e-12),
            Check("identical output for threads 1, 4, 8", "identical" if det else "differs",
                  "byte-identical", det)]


@_register("universality-flat", "gaussian vs bernoulli N_[5,15], flat n=400", 20240611)
def _universality_flat(seed, threads):
    gap = universality_gap(_ens("flat", 400), _ens("flat", 400, "bernoulli"),
                           count_observable(Interval(5.0, 15.0)), 4000, seed, threads)
    return [_sigma_check("gaussian - bernoulli gap in N_[5,15]", gap, 0.0)]


@_register("universality-kac-edge", "gaussian vs bernoulli edge counts, kac n=500", 20240612)
def _universality_kac(seed, threads):
    n = 500
    region = Disk(1.0 + 1.0 / n, 0.5 / n)
    gap = universality_gap(_ens("kac", n), _ens("kac", n, "bernoulli"), count_observable(region),
                           4000, seed, threads)
    return [_sigma_check("gaussian - bernoulli gap in N_B(1+1/n, 0.5/n)", gap, 0.0)]


@_register("kac-edge", "Kac edge profile F(a)", 1)
def _kac_edge(seed, threads):
    n = 500
    pred = go.predicted_complex_intensity(make_scheme("kac", n), 1.0 + 1.0 / n) / n**2
    f1 = go.kac_edge_profile(1.0)
    grid = np.linspace(0.0, 10.0, 1001)
    vals = [go.kac_edge_profile(a) for a in grid]
    mono = all(a >= b for a, b in zip(vals, vals[1:]))
    return [Check("n^-2 ρ₁(1+1/n) ≈ F(1), n=500", f"{pred:.6f} vs {f1:.6f}", "5%",
                  abs(pred / f1 - 1) <= 0.05),
            Check("F(0) = 1/(12π)", f"{go.kac_edge_profile(0.0):.8f}", "1e-12",
                  abs(go.kac_edge_profile(0.0) - 1 / (12 * math.pi)) <= 1e-12),
            Check("F nonincreasing on [0, 10]", "yes" if mono else "no", "monotone", mono)]


# acceptance criterion number -> registry ids
ACCEPTANCE = {
    1: ("elliptic-exact",),
    2: ("elliptic-mc",),
    3: ("flat-real-count",),
    4: ("flat-bulk-intensity",),
    5: ("local-circular-law",),
    6: ("kac-log-growth",),
    7: ("gaussian-identities",),
    8: ("repulsion",),
    9: ("concentration",),
    10: ("property-suites",),
}
