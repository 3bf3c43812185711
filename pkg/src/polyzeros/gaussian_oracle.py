"""Exact zero intensities for real gaussian coefficients.

Every random variable in play (``f(x)``, ``f'(x)``, ``Re f(z)``...) is a dot
product ``X . v`` of the standard gaussian coefficient vector with a
deterministic vector, so Kac-Rice reduces to linear algebra on a handful of
such vectors.  Vectors are stored log-stabilized (a common real factor pulled
out) and all quantities below are invariant under that factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaincc, logsumexp

from .ensemble import CoefficientScheme

INV_PI = 1.0 / math.pi
KAC_SHIFT = 100.0


class DegenerateSpan(ValueError):
    """Constraint vectors are (numerically) linearly dependent."""


class ZeroVariance(ValueError):
    """``V`` vanishes at a point where a density was requested."""


@dataclass(frozen=True)
class EvaluationVector:
    """``exp(log_factor) * entries``; ``entries`` has max-magnitude order one."""

    entries: np.ndarray
    log_factor: float

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.entries, self.entries).real)


@dataclass(frozen=True)
class IntensityValue:
    value: float
    kind: str
    points: tuple
    scheme: str
    n: int

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# Variance function
# ---------------------------------------------------------------------------


def _log_geometric_sum(count: int, s: float) -> float:
    """``log sum_{i<count} e^{i s}``."""
    if s == 0:
        return math.log(count)
    if count * s > 700:
        return count * s + math.log(-math.expm1(-count * s)) - math.log(math.expm1(s))
    return math.log(math.expm1(count * s) / math.expm1(s))


def variance_fn(scheme: CoefficientScheme, z: complex) -> float:
    """``log V(z)`` where ``V(z) = sum_i c_i^2 |z|^{2i} = E|f(z)|^2``."""
    n = scheme.n
    r2 = abs(complex(z)) ** 2
    if scheme.kind == "elliptic_rescaled":
        return n * math.log1p(r2 / n)
    if scheme.kind == "elliptic":
        return n * math.log1p(r2)
    if r2 == 0:
        return 2.0 * scheme.log_coefficients()[0]
    if scheme.kind == "kac":
        return _log_geometric_sum(n + 1, math.log(r2))
    if scheme.kind == "flat":
        # sum_{i<=n} x^i/i! = e^x Q(n+1, x)
        q = gammaincc(n + 1, r2)
        if q > 1e-280:
            return r2 + math.log(q)
    i = np.arange(n + 1)
    return float(logsumexp(2.0 * scheme.log_coefficients() + i * math.log(r2)))


def _index_weights(scheme: CoefficientScheme, r2: float) -> np.ndarray:
    """Probability weights ``p_i ∝ c_i^2 r2^i``."""
    t = 2.0 * scheme.log_coefficients() + np.arange(scheme.n + 1) * math.log(r2)
    t = t - t[np.isfinite(t)].max()
    with np.errstate(under="ignore"):
        p = np.exp(t)
    return p / p.sum()


def _index_variance(scheme: CoefficientScheme, r2: float) -> float:
    p = _index_weights(scheme, r2)
    i = np.arange(scheme.n + 1)
    mean = float(np.dot(p, i))
    return float(np.dot(p, (i - mean) ** 2))


def predicted_complex_intensity(scheme: CoefficientScheme, z: complex, h: float | None = None) -> float:
    """First intensity ``(1/4π) Δ log V(z)`` predicted for the zeros.

    With ``h`` given, the Laplacian is the 5-point stencil of spacing ``h``.
    Otherwise it is evaluated exactly: ``V`` is radial, and with
    ``p_i ∝ c_i^2 |z|^{2i}`` one has ``Δ log V = 4 Var_p(i) / |z|^2``.
    Rescaled elliptic schemes use ``(1/π)(1 + |z|^2/n)^{-2}``.
    """
    z = complex(z)
    n = scheme.n
    if h is not None:
        if not h > 0:
            raise ValueError("stencil spacing must be positive")
        pts = [z, z + h, z - h, z + 1j * h, z - 1j * h]
        vals = [variance_fn(scheme, p) for p in pts]
        if any(v == -math.inf for v in vals):
            raise ZeroVariance(f"stencil around {z} touches a zero of V")
        lap = (vals[1] + vals[2] + vals[3] + vals[4] - 4.0 * vals[0]) / (h * h)
        return lap / (4.0 * math.pi)
    if scheme.kind == "elliptic_rescaled":
        return INV_PI / (1.0 + abs(z) ** 2 / n) ** 2
    r2 = abs(z) ** 2
    if r2 == 0:
        logc = scheme.log_coefficients()
        if n == 0 or logc[0] == -math.inf:
            raise ZeroVariance("V(0) = 0")
        return INV_PI * math.exp(2.0 * (logc[1] - logc[0]))
    return INV_PI * _index_variance(scheme, r2) / r2


def expected_zeros_in_disk(scheme: CoefficientScheme, r: float) -> float:
    """Expected number of zeros in ``|z| < r`` for complex gaussian coefficients.

    Jensen's formula gives ``(r/2) d/dr log V(r)``, the mean index under the
    weights ``p_i ∝ c_i^2 r^{2i}``.  For real coefficients it is a close
    approximation, not an identity.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    p = _index_weights(scheme, r * r)
    return float(np.dot(p, np.arange(scheme.n + 1)))


# ---------------------------------------------------------------------------
# Gaussian identities
# ---------------------------------------------------------------------------


def wedge_norm(v: Sequence[complex], w: Sequence[complex]) -> float:
    """``|v ∧ w|`` via ``|v|^2 |w|^2 - |<v, w>|^2``."""
    v = np.asarray(v)
    w = np.asarray(w)
    if v.shape != w.shape:
        raise ValueError(f"length mismatch {v.shape} vs {w.shape}")
    vv = np.vdot(v, v).real
    ww = np.vdot(w, w).real
    vw = np.vdot(v, w)
    return math.sqrt(max(vv * ww - abs(vw) ** 2, 0.0))


def _qr_r(columns: Sequence[np.ndarray]) -> np.ndarray:
    a = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    return np.linalg.qr(a, mode="r")


def _check_span(r: np.ndarray, norms: np.ndarray, m: int) -> None:
    # Gram determinant relative to prod |v_i|^2 must exceed 1e-14
    rel = np.prod(np.abs(np.diag(r)[:m])) / np.prod(norms[:m])
    if not rel > 1e-7:
        raise DegenerateSpan("constraint vectors are linearly dependent")


def gauss_zero_density(v_list: Sequence[Sequence[float]]) -> float:
    """Density at the origin of ``(X . v_1, ..., X . v_m)``, ``X`` standard gaussian.

    Equals ``(2π)^{-m/2} |v_1 ∧ ... ∧ v_m|^{-1}``; the wedge norm is the
    product of the QR diagonal.
    """
    m = len(v_list)
    if not 1 <= m <= 4:
        raise ValueError("between 1 and 4 constraint vectors are supported")
    r = _qr_r(v_list)
    norms = np.array([np.linalg.norm(np.asarray(v, dtype=float)) for v in v_list])
    _check_span(r, norms, m)
    return (2.0 * math.pi) ** (-m / 2.0) / float(np.prod(np.abs(np.diag(r))))


def span_distance(v: Sequence[float], v_list: Sequence[Sequence[float]]) -> float:
    """Euclidean distance from ``v`` to ``span(v_list)``."""
    m = len(v_list)
    r = _qr_r(list(v_list) + [v])
    norms = np.array([np.linalg.norm(np.asarray(u, dtype=float)) for u in v_list])
    _check_span(r, norms, m)
    return abs(float(r[m, m])) if r.shape[0] > m else 0.0


def conditional_abs_moment(v: Sequence[float], v_list: Sequence[Sequence[float]]) -> float:
    """``E(|X . v| | X . v_j = 0 for all j) = sqrt(2/π) dist(v, span)``."""
    return math.sqrt(2.0 / math.pi) * span_distance(v, v_list)


def conditional_second_moment(v: Sequence[float], v_list: Sequence[Sequence[float]]) -> float:
    """``E(|X . v|^2 | X . v_j = 0 for all j) = dist(v, span)^2``."""
    return span_distance(v, v_list) ** 2


def abs_product_moment(sx: float, sy: float, corr: float) -> float:
    """``E|XY|`` for a centred gaussian pair with sds ``sx, sy`` and correlation ``corr``."""
    corr = min(1.0, max(-1.0, corr))
    return 2.0 / math.pi * sx * sy * (math.sqrt(1.0 - corr * corr) + corr * math.asin(corr))


# ---------------------------------------------------------------------------
# Evaluation vectors
# ---------------------------------------------------------------------------


def normalizer_log_derivative(scheme: CoefficientScheme, z: complex,
                              shift: float = KAC_SHIFT) -> complex:
    """``R'(z)/R(z)`` for the per-scheme normalizer.

    flat ``e^{-z^2/2}``; elliptic_rescaled ``(1+z^2/n)^{-n/2}``; elliptic
    ``(1+z^2)^{-n/2}``; Kac ``(1 - z^2 + shift/n)^{1/2}``; hyperbolic the
    Kac form raised to ``L``; custom ``1``.
    """
    n = scheme.n
    kind = scheme.kind
    if kind == "flat":
        return -z
    if kind == "elliptic_rescaled":
        return -z / (1.0 + z * z / n)
    if kind == "elliptic":
        return -n * z / (1.0 + z * z)
    if kind in ("kac", "hyperbolic"):
        power = 1.0 if kind == "kac" else scheme.L
        return -power * z / (1.0 - z * z + shift / max(n, 1))
    return 0.0


def normalizer_log_abs(scheme: CoefficientScheme, z: complex, shift: float = KAC_SHIFT) -> float:
    """``log|R(z)|`` for the normalizer described in :func:`normalizer_log_derivative`."""
    n = scheme.n
    kind = scheme.kind
    z = complex(z)
    with np.errstate(divide="ignore"):
        if kind == "flat":
            return -0.5 * (z * z).real
        if kind == "elliptic_rescaled":
            return -0.5 * n * math.log(abs(1.0 + z * z / n))
        if kind == "elliptic":
            return -0.5 * n * math.log(abs(1.0 + z * z))
        if kind in ("kac", "hyperbolic"):
            power = 1.0 if kind == "kac" else scheme.L
            base = abs(1.0 - z * z + shift / max(n, 1))
            return 0.5 * power * math.log(base) if base > 0 else -math.inf
    return 0.0


def evaluation_vectors(scheme: CoefficientScheme, z: complex, normalizer: str | None = "scheme",
                       shift: float = KAC_SHIFT) -> tuple[EvaluationVector, EvaluationVector]:
    """Vectors ``v(z) = (R c_i z^i)`` and ``v'(z)`` in log-stabilized form.

    The constant phase of ``R`` is dropped so that real ``z`` gives real
    entries; ratio-type quantities do not see it.  ``normalizer=None`` sets
    ``R = 1``.  Both vectors share the same ``log_factor``.
    """
    z = complex(z)
    n = scheme.n
    logc = scheme.log_coefficients()
    i = np.arange(n + 1)
    if z == 0:
        v = np.zeros(n + 1, dtype=complex)
        w = np.zeros(n + 1, dtype=complex)
        top = logc[0] if n == 0 or logc[0] >= logc[1] else logc[1]
        v[0] = math.exp(logc[0] - top)
        if n >= 1:
            w[1] = math.exp(logc[1] - top)
    else:
        # v_i = c_i z^i and w_i = i c_i z^{i-1}, both in log form so that
        # neither tiny nor huge |z| overflows the other vector
        log_r = math.log(abs(z))
        t = logc + i * log_r
        with np.errstate(divide="ignore"):
            tw = np.log(i) + logc + (i - 1) * log_r
        top = max(t[np.isfinite(t)].max(), tw[np.isfinite(tw)].max(initial=-math.inf))
        if z.imag == 0:
            rot = np.where(i % 2 == 1, -1.0, 1.0) if z.real < 0 else np.ones(n + 1)
            unit = -1.0 if z.real < 0 else 1.0
        else:
            theta = math.atan2(z.imag, z.real)
            rot = np.exp(1j * theta * i)
            unit = complex(math.cos(theta), -math.sin(theta))
        with np.errstate(under="ignore"):
            v = np.exp(t - top) * rot
            w = np.exp(tw - top) * rot * unit
    log_factor = top
    if normalizer == "scheme":
        dlog = complex(normalizer_log_derivative(scheme, z, shift))
        lr = normalizer_log_abs(scheme, z, shift)
        # drop R where it vanishes or blows up; ratio quantities are unchanged
        if cmath_isfinite(dlog) and math.isfinite(lr):
            w = w + dlog * v
            log_factor += lr
    elif normalizer is not None:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    if z.imag == 0:
        v, w = v.real.copy(), w.real.copy()
    return EvaluationVector(v, log_factor), EvaluationVector(w, log_factor)


def cmath_isfinite(c: complex) -> bool:
    return math.isfinite(c.real) and math.isfinite(c.imag)


# ---------------------------------------------------------------------------
# Kac closed forms
# ---------------------------------------------------------------------------

_H_SERIES = (-1.0 / 3.0, 1.0 / 15.0, -2.0 / 189.0, 1.0 / 675.0, -2.0 / 10395.0, 1382.0 / 58046625.0)


def _h(u: float) -> float:
    """``1/sinh(u)^2 - 1/u^2``, smooth through ``u = 0``."""
    u = abs(u)
    if u < 0.05:
        u2 = u * u
        acc = 0.0
        for c in reversed(_H_SERIES):
            acc = acc * u2 + c
        return acc
    if u > 350.0:
        return -1.0 / (u * u)
    return 1.0 / math.sinh(u) ** 2 - 1.0 / (u * u)


def kac_index_variance(n: int, r2: float) -> float:
    """Variance of ``i`` under weights ``∝ r2^i`` on ``0..n``, in closed form.

    With ``s = -log r2`` and ``N = n + 1`` it is
    ``(h(s/2) - N^2 h(N s/2)) / 4``, ``h(u) = 1/sinh^2 u - 1/u^2``.
    """
    N = n + 1
    if r2 == 0:
        return 0.0
    s = -math.log(r2)
    return 0.25 * (_h(0.5 * s) - N * N * _h(0.5 * N * s))


def _kac_rho10(n: int, x: float) -> float:
    if n == 0:
        return 0.0
    x = abs(x)
    if x == 0:
        return INV_PI
    if x > 1.0:
        # z -> z^n f(1/z) maps Kac polynomials to Kac polynomials; the
        # sinh form cancels catastrophically for large x
        return _kac_rho10(n, 1.0 / x) / (x * x)
    t = x * x
    N = n + 1
    if t <= 0.25:
        tn = t ** (N - 1)
        ratio = 1.0 / (1.0 - t) ** 2 - N * N * tn / (1.0 - tn * t) ** 2
    else:
        ratio = kac_index_variance(n, t) / t
    return INV_PI * math.sqrt(max(ratio, 0.0))


def kac_edge_profile(a: float) -> float:
    """Edge profile ``F(a) = (1 - (a/sinh a)^2) / (4π a^2)``; ``F(0) = 1/(12π)``."""
    if a < 0:
        raise ValueError("edge profile needs a >= 0")
    if a < 1e-3:
        a2 = a * a
        return INV_PI * (1.0 / 12.0 - a2 / 60.0 + a2 * a2 / 378.0)
    if a > 700:
        return 1.0 / (4.0 * math.pi * a * a)
    return (1.0 - (a / math.sinh(a)) ** 2) / (4.0 * math.pi * a * a)


# ---------------------------------------------------------------------------
# Kac-Rice intensities
# ---------------------------------------------------------------------------


def _rho10_general(scheme: CoefficientScheme, x: float) -> float:
    v, w = evaluation_vectors(scheme, x, normalizer=None)
    vv = v.norm_sq
    if vv == 0:
        raise ZeroVariance(f"V({x}) = 0")
    resid = w.entries - (np.dot(v.entries, w.entries) / vv) * v.entries
    return INV_PI * float(np.linalg.norm(resid)) / math.sqrt(vv)


def rho10(scheme: CoefficientScheme, x: float, method: str = "auto") -> float:
    """Float-valued first real intensity; see :func:`real_intensity_1`."""
    x = float(x)
    if scheme.n == 0:
        return 0.0
    if method == "auto":
        if scheme.kind == "elliptic_rescaled":
            return INV_PI / (1.0 + x * x / scheme.n)
        if scheme.kind == "kac":
            return _kac_rho10(scheme.n, x)
    elif method != "general":
        raise ValueError(f"unknown method {method!r}")
    return _rho10_general(scheme, x)


def real_intensity_1(scheme: CoefficientScheme, x: float, method: str = "auto") -> IntensityValue:
    """Density of real zeros ``ρ^{(1,0)}(x) = (1/π) dist(v'(x), span v(x)) / |v(x)|``.

    ``method="auto"`` uses closed forms for rescaled elliptic and Kac schemes;
    ``"general"`` always goes through the evaluation vectors.  The ratio does
    not see the normalizer ``R`` (``R'`` only adds a multiple of ``v`` to
    ``v'``), so the unnormalized vectors are used: adding ``(R'/R) v`` would
    only inject rounding error of size ``|x| |v|``.
    """
    val = rho10(scheme, x, method)
    return IntensityValue(val, "rho_10", (float(x),), scheme.scheme_id, scheme.n)


def _pair_columns(scheme, points):
    vs, ws = [], []
    for p in points:
        v, w = evaluation_vectors(scheme, p, normalizer=None)
        if v.norm_sq == 0:
            raise ZeroVariance(f"V({p}) = 0")
        vs.append(v.entries)
        ws.append(w.entries)
    return vs, ws


def real_intensity_2(scheme: CoefficientScheme, x: float, y: float) -> IntensityValue:
    """Two-point real correlation ``ρ^{(2,0)}(x, y)`` by Kac-Rice.

    Density of ``(f(x), f(y))`` at the origin times ``E|f'(x) f'(y)|`` given
    ``f(x) = f(y) = 0``; the conditional covariance comes from a QR
    factorization (the Schur complement in triangular form).
    """
    if x == y:
        raise DegenerateSpan("ρ^{(2,0)} needs distinct points")
    # fixed argument order makes the result exactly symmetric
    lo, hi = sorted((float(x), float(y)))
    (vx, vy), (wx, wy) = _pair_columns(scheme, (lo, hi))
    r = _qr_r([vx, vy, wx, wy])
    _check_span(r, np.array([np.linalg.norm(vx), np.linalg.norm(vy)]), 2)
    density = 1.0 / (2.0 * math.pi * abs(r[0, 0] * r[1, 1]))
    t = r[2:4, 2:4]
    cov = t.T @ t
    sx, sy = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    corr = cov[0, 1] / (sx * sy) if sx > 0 and sy > 0 else 0.0
    val = density * abs_product_moment(sx, sy, corr)
    return IntensityValue(val, "rho_20", (float(x), float(y)), scheme.scheme_id, scheme.n)


def complex_intensity_01(scheme: CoefficientScheme, z: complex) -> IntensityValue:
    """Intensity ``ρ^{(0,1)}(z)`` of non-real zeros for real gaussian coefficients.

    Kac-Rice with the two real constraints ``Re f(z) = Im f(z) = 0`` and
    Jacobian ``|f'(z)|^2 = (Re f')^2 + (Im f')^2``.
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("ρ^{(0,1)} is defined off the real axis")
    (v,), (w,) = _pair_columns(scheme, (z,))
    cols = [v.real, v.imag, w.real, w.imag]
    r = _qr_r(cols)
    _check_span(r, np.array([np.linalg.norm(v.real), np.linalg.norm(v.imag)]), 2)
    density = 1.0 / (2.0 * math.pi * abs(r[0, 0] * r[1, 1]))
    second = r[2, 2] ** 2 + r[2, 3] ** 2 + r[3, 3] ** 2
    return IntensityValue(density * second, "rho_01", (z,), scheme.scheme_id, scheme.n)


# ---------------------------------------------------------------------------
# Integrals of the real intensity
# ---------------------------------------------------------------------------


def _panel_breaks(n: int) -> np.ndarray:
    k = int(math.ceil(math.log2(max(n, 2)))) + 6
    inner = [2.0 ** (-j) for j in range(1, k + 1)]
    outer = [1.0 - 2.0 ** (-j) for j in range(2, k + 1)]
    return np.unique(np.array([0.0, 1.0] + inner + outer))


def integrate_real_intensity(scheme: CoefficientScheme, a: float = -math.inf, b: float = math.inf,
                             method: str = "auto", epsrel: float = 1e-9) -> float:
    """``∫_a^b ρ^{(1,0)}(x) dx``, the expected number of real zeros in ``[a, b]``.

    The full line is folded onto ``[-1, 1]`` with ``x -> 1/x`` on ``|x| > 1``
    and split into geometric panels that resolve structure down to scale
    ``1/n`` near ``0`` and ``±1``.
    """
    if a > b:
        raise ValueError("need a <= b")
    rho = lambda x: rho10(scheme, x, method)  # noqa: E731
    if math.isfinite(a) and math.isfinite(b):
        pts = np.linspace(a, b, 17)
        return math.fsum(integrate.quad(rho, p, q, epsrel=epsrel, epsabs=0, limit=200)[0]
                         for p, q in zip(pts[:-1], pts[1:]))

    def folded(u: float) -> float:
        if u == 0:
            return rho(0.0)
        x = 1.0 / u
        inside = rho(x) / (u * u) if a <= x <= b else 0.0
        return (rho(u) if a <= u <= b else 0.0) + inside

    breaks = _panel_breaks(scheme.n)
    parts = []
    for sign in (1.0, -1.0):
        for p, q in zip(breaks[:-1], breaks[1:]):
            f = (lambda u, s=sign: folded(s * u))
            parts.append(integrate.quad(f, p, q, epsrel=epsrel, epsabs=1e-14, limit=200)[0])
    return math.fsum(parts)


def expected_real_zeros(scheme: CoefficientScheme, method: str = "auto") -> float:
    """Expected number of real zeros for real gaussian atoms."""
    return integrate_real_intensity(scheme, method=method)


def integrate_against(rho: Callable[[float], float], kernel: Callable[[float], float],
                      lo: float, hi: float, pieces: int = 16) -> float:
    """``∫ kernel(x) rho(x) dx`` over ``[lo, hi]`` by panelled adaptive quadrature."""
    pts = np.linspace(lo, hi, pieces + 1)
    return math.fsum(
        integrate.quad(lambda x: kernel(x) * rho(x), p, q, epsabs=1e-13, epsrel=1e-10, limit=200)[0]
        for p, q in zip(pts[:-1], pts[1:])
    )


# ---------------------------------------------------------------------------
# Lacunary subsequences
# ---------------------------------------------------------------------------


def lacunary_subsequence(b: Sequence[float], C: float) -> list[int]:
    """Greedy indices ``i_1 < i_2 < ...`` with ``b[i_j] >= 2 b[i_{j+1}]``.

    ``b`` must be positive, nonincreasing, with consecutive ratios at most
    ``C >= 2``.  Each greedy drop is at most ``2C``, so the result has at
    least ``log(b_0 / (2 b_l)) / log(2C)`` entries; this is asserted.
    """
    b = np.asarray(b, dtype=float)
    if C < 2:
        raise ValueError("ratio bound C must be >= 2")
    if b.size == 0 or np.any(b <= 0):
        raise ValueError("sequence must be nonempty and strictly positive")
    if np.any(np.diff(b) > 0):
        raise ValueError("sequence must be nonincreasing")
    if b.size > 1 and np.any(b[:-1] / b[1:] > C * (1 + 1e-12)):
        raise ValueError(f"consecutive ratio exceeds C = {C}")
    picks = [0]
    for i in range(1, b.size):
        if b[i] <= 0.5 * b[picks[-1]]:
            picks.append(i)
    lower = math.log(b[0] / (2.0 * b[-1])) / math.log(2.0 * C)
    assert len(picks) >= lower, "greedy lacunary bound violated"
    return picks
