"""Zeros of sampled polynomials on the Riemann sphere.

Finite zeros come from Aberth-Ehrlich simultaneous iteration started on the
Newton polygon of the coefficient magnitudes.  Vanishing top coefficients are
reported as zeros at infinity, so every polynomial of degree bound ``n`` has
exactly ``n`` zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _aberth
from .ensemble import PolySample

DEFAULT_REL_TOL = 1e-12
DEFAULT_MAX_ITERS = 500
DEFAULT_SNAP_TOL = 1e-8
PAIR_TOL = 1e-6
# balanced log-magnitudes must fit in double precision around 1
_MAX_LOG_RANGE = 1300.0
_INIT_PHASE = 0.7
# per-edge phase offset; avoids a tight spiral when every edge holds one root
_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


class ClassificationError(RuntimeError):
    """An unpaired root sits too far from the real axis to be snapped."""


class ClassificationMissing(RuntimeError):
    """A real-axis statistic was requested before :func:`classify_real`."""


@dataclass(frozen=True, eq=False)
class RootSet:
    finite_roots: np.ndarray
    roots_at_infinity: int
    n: int
    residual_bound: float
    converged: bool = True
    iterations: int = 0
    real_roots: np.ndarray | None = None
    upper_half_roots: np.ndarray | None = None

    @property
    def classified(self) -> bool:
        return self.real_roots is not None

    @property
    def num_real(self) -> int:
        if not self.classified:
            raise ClassificationMissing("call classify_real first")
        return int(self.real_roots.size)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "roots_at_infinity": self.roots_at_infinity,
            "finite_roots": [[float(z.real), float(z.imag)] for z in self.finite_roots],
            "residual_bound": float(self.residual_bound),
            "converged": bool(self.converged),
        }
        if self.classified:
            out["real_roots"] = [float(x) for x in self.real_roots]
            out["upper_half_roots"] = [[float(z.real), float(z.imag)] for z in self.upper_half_roots]
        return out


def _as_log_form(poly) -> tuple[np.ndarray, np.ndarray, int]:
    if isinstance(poly, PolySample):
        return poly.log_abs, poly.phase, poly.n
    p = PolySample.from_coeffs(np.asarray(poly, dtype=complex))
    return p.log_abs, p.phase, p.n


def newton_polygon_edges(log_abs: np.ndarray) -> list[tuple[int, int, float]]:
    """Edges ``(k0, k1, radius)`` of the upper convex hull of ``(i, log|a_i|)``.

    Each edge spans ``k1 - k0`` zeros of suggested modulus ``radius``.
    """
    hull: list[int] = []
    for i in np.flatnonzero(np.isfinite(log_abs)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # drop i1 if it lies on or below the chord from i0 to i
            cross = (i1 - i0) * (log_abs[i] - log_abs[i0]) - (i - i0) * (log_abs[i1] - log_abs[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(int(i))
    return [(k0, k1, math.exp((log_abs[k0] - log_abs[k1]) / (k1 - k0)))
            for k0, k1 in zip(hull[:-1], hull[1:])]


def initial_guesses(log_abs: np.ndarray) -> np.ndarray:
    """Bini-style starting points: polygon moduli, equidistributed phases per edge."""
    m = log_abs.size - 1
    out = np.empty(m, dtype=complex)
    for k0, k1, r in newton_polygon_edges(log_abs):
        cnt = k1 - k0
        ang = 2 * np.pi * np.arange(cnt) / cnt + _GOLDEN * k0 + _INIT_PHASE
        out[k0:k1] = r * np.exp(1j * ang)
    return out


def find_roots(poly, rel_tol: float = DEFAULT_REL_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> RootSet:
    """All ``n`` zeros of ``poly`` (a :class:`PolySample` or coefficient list).

    Trailing zero coefficients become zeros at infinity; leading zero
    coefficients are exact zeros at the origin.  The remaining polynomial is
    rescaled ``z = rho * w`` so its end coefficients balance, solved by
    Aberth-Ehrlich and polished with one Newton step per root.
    ``converged`` is False when the sweep budget ran out.
    """
    if not 0 < rel_tol <= 1e-6:
        raise ValueError("rel_tol must lie in (0, 1e-6]")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    log_abs, phase, n = _as_log_form(poly)
    nz = np.flatnonzero(np.isfinite(log_abs))
    if nz.size == 0:
        return RootSet(np.empty(0, dtype=complex), n, n, 0.0)
    lo, hi = int(nz[0]), int(nz[-1])
    at_inf = n - hi
    zeros = np.zeros(lo, dtype=complex)
    m = hi - lo
    if m == 0:
        return RootSet(zeros, at_inf, n, 0.0)

    y = log_abs[lo:hi + 1]
    ph = phase[lo:hi + 1]
    log_rho = (y[0] - y[-1]) / m
    yb = y + np.arange(m + 1) * log_rho
    fin = yb[np.isfinite(yb)]
    if fin.max() - fin.min() > _MAX_LOG_RANGE:
        raise OverflowError(
            f"balanced coefficient range e^{fin.max() - fin.min():.0f} exceeds double precision"
        )
    yb = yb - 0.5 * (fin.max() + fin.min())
    with np.errstate(under="ignore"):
        b = (ph * np.exp(yb)).astype(np.complex128)

    if m == 1:
        w = np.array([-b[0] / b[1]])
        converged, sweeps = True, 0
    else:
        w = initial_guesses(yb)
        converged, sweeps = _aberth.aberth(b, w, rel_tol, max_iters)
    resid = _aberth.polish(b, w)
    roots = np.concatenate([zeros, w * math.exp(log_rho)])
    return RootSet(roots, at_inf, n, float(resid), bool(converged), int(sweeps))


def classify_real(root_set: RootSet, snap_tol: float = DEFAULT_SNAP_TOL,
                  pair_tol: float = PAIR_TOL) -> RootSet:
    """Split roots of a real polynomial into real and conjugate pairs.

    Conjugate pairs are matched greedily by ``|zeta - conj(eta)|`` (within
    ``pair_tol * (1 + |zeta|)``) and replaced by their exact symmetrization;
    unmatched roots with ``|Im| <= snap_tol * (1 + |zeta|)`` are snapped to the
    real axis.  Anything else raises :class:`ClassificationError`.
    """
    z = np.asarray(root_set.finite_roots, dtype=complex)
    upper = np.flatnonzero(z.imag > 0)
    lower = np.flatnonzero(z.imag < 0)
    used = np.zeros(z.size, dtype=bool)
    pairs: list[complex] = []
    if upper.size and lower.size:
        d = np.abs(z[upper][:, None] - np.conj(z[lower])[None, :])
        allow = pair_tol * (1.0 + np.abs(z[upper]))[:, None]
        cand = np.argwhere(d <= allow)
        order = np.argsort(d[cand[:, 0], cand[:, 1]], kind="stable")
        for ci in order:
            iu, il = upper[cand[ci, 0]], lower[cand[ci, 1]]
            if used[iu] or used[il]:
                continue
            used[iu] = used[il] = True
            pairs.append(0.5 * (z[iu] + np.conj(z[il])))
    rest = np.flatnonzero(~used)
    near_real = np.abs(z[rest].imag) <= snap_tol * (1.0 + np.abs(z[rest]))
    if not np.all(near_real):
        bad = z[rest[~near_real]]
        raise ClassificationError(
            f"{bad.size} unpaired non-real root(s), e.g. {bad[0]!r}; solver accuracy lost"
        )
    real = np.sort(z[rest].real)
    up = np.asarray(pairs, dtype=complex)
    up = up[np.lexsort((up.imag, up.real))] if up.size else up
    finite = np.concatenate([real.astype(complex), up, np.conj(up)])
    return replace(root_set, finite_roots=finite, real_roots=real, upper_half_roots=up)


def count_in_disk(root_set: RootSet, z0: complex, r: float) -> int:
    """Number of finite roots with ``|zeta - z0| < r``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return int(np.count_nonzero(np.abs(root_set.finite_roots - z0) < r))


def count_in_interval(root_set: RootSet, a: float = -math.inf, b: float = math.inf) -> int:
    """Number of real roots in the closed interval ``[a, b]``."""
    if a > b:
        raise ValueError("need a <= b")
    if not root_set.classified:
        raise ClassificationMissing("count_in_interval needs classify_real output")
    x = root_set.real_roots
    return int(np.count_nonzero((x >= a) & (x <= b)))


def evaluate_log_abs(poly, z: complex) -> float:
    """``log|f(z)|`` for the unscaled polynomial, ``-inf`` iff ``f(z) = 0``.

    Terms are shifted by their largest log-magnitude and summed with
    ``math.fsum`` on real and imaginary parts, so neither overflow nor
    cancellation between large terms corrupts the result.
    """
    log_abs, phase, n = _as_log_form(poly)
    z = complex(z)
    if z == 0:
        return float(log_abs[0])
    i = np.arange(n + 1)
    t = log_abs + i * math.log(abs(z))
    fin = np.isfinite(t)
    if not fin.any():
        return -math.inf
    top = t[fin].max()
    if z.imag == 0:
        rot = np.where(i % 2 == 1, -1.0, 1.0) if z.real < 0 else np.ones(n + 1)
    else:
        rot = np.exp(1j * math.atan2(z.imag, z.real) * i)
    with np.errstate(under="ignore"):
        terms = np.where(fin, np.exp(np.where(fin, t - top, 0.0)), 0.0) * phase * rot
    re = math.fsum(terms.real)
    im = math.fsum(terms.imag)
    mag = math.hypot(re, im)
    if mag == 0:
        return -math.inf
    return math.log(mag) + top


def vieta_check(coeffs: Sequence[complex], roots: np.ndarray) -> tuple[float, float]:
    """Relative errors of the root sum and root product against coefficient ratios."""
    a = np.asarray(coeffs, dtype=complex)
    m = a.size - 1
    s_err = abs(roots.sum() + a[m - 1] / a[m]) / max(np.abs(roots).sum(), 1e-300)
    log_prod = np.sum(np.log(roots.astype(complex)))
    target = complex((-1) ** m * a[0] / a[m])
    p_err = abs(np.exp(log_prod - np.log(target)) - 1.0)
    return float(s_err), float(p_err)
