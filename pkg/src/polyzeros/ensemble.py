"""Coefficient schemes, atom distributions and reproducible polynomial sampling.

A random polynomial is ``f(z) = sum_i c_i xi_i z**i`` where ``c_i`` comes from a
:class:`CoefficientScheme` and the ``xi_i`` are iid draws from an
:class:`AtomDistribution`.  Coefficients are kept in log-magnitude form so that
schemes such as ``c_i = 1/sqrt(i!)`` never underflow.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

SCHEME_KINDS = ("flat", "elliptic", "elliptic_rescaled", "kac", "hyperbolic", "custom")
ATOM_FAMILIES = (
    "gaussian_real",
    "gaussian_complex",
    "bernoulli",
    "uniform_real",
    "uniform_complex_disk",
    "custom_discrete",
)
MOMENT_ORDER = 4
_MASK64 = (1 << 64) - 1


class InvalidParameter(ValueError):
    """Raised for malformed scheme or atom parameters."""


# ---------------------------------------------------------------------------
# Coefficient schemes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientScheme:
    kind: str
    n: int
    L: float | None = None
    custom_log_coeffs: tuple[float, ...] | None = None

    @property
    def scheme_id(self) -> str:
        if self.kind == "hyperbolic":
            return f"hyperbolic(L={self.L!r})[n={self.n}]"
        if self.kind == "custom":
            digest = hashlib.sha256(
                json.dumps([repr(v) for v in self.custom_log_coeffs]).encode()
            ).hexdigest()[:12]
            return f"custom:{digest}[n={self.n}]"
        return f"{self.kind}[n={self.n}]"

    def log_coefficients(self) -> np.ndarray:
        """Vector of ``log c_i`` for ``i = 0..n`` (``-inf`` where ``c_i = 0``)."""
        i = np.arange(self.n + 1, dtype=float)
        n = float(self.n)
        if self.kind == "kac":
            return np.zeros(self.n + 1)
        if self.kind == "flat":
            return -0.5 * gammaln(i + 1.0)
        log_binom = gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(n - i + 1.0)
        if self.kind == "elliptic":
            return 0.5 * log_binom
        if self.kind == "elliptic_rescaled":
            return 0.5 * (log_binom - i * math.log(n)) if self.n > 0 else np.zeros(1)
        if self.kind == "hyperbolic":
            # L(L+1)...(L+i-1) = Gamma(L+i)/Gamma(L)
            return 0.5 * (gammaln(self.L + i) - gammaln(self.L) - gammaln(i + 1.0))
        return np.asarray(self.custom_log_coeffs, dtype=float)

    def coefficients(self) -> np.ndarray:
        return np.exp(self.log_coefficients())

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "n": self.n}
        if self.kind == "hyperbolic":
            out["L"] = self.L
        if self.kind == "custom":
            out["log_coeffs"] = [_float_token(v) for v in self.custom_log_coeffs]
        return out

    @classmethod
    def from_dict(cls, spec: Mapping) -> "CoefficientScheme":
        spec = dict(spec)
        kind = spec.pop("kind", None)
        n = spec.pop("n", None)
        if "log_coeffs" in spec:
            spec["custom_log_coeffs"] = [_parse_float_token(v) for v in spec.pop("log_coeffs")]
        if "coeffs" in spec:
            spec["custom_coeffs"] = spec.pop("coeffs")
        return make_scheme(kind, n, **spec)


def make_scheme(kind: str, n: int | None = None, **params) -> CoefficientScheme:
    """Build a coefficient scheme.

    ``params`` may hold ``L`` (hyperbolic), ``custom_log_coeffs`` or
    ``custom_coeffs`` (custom; nonnegative reals, converted to logs).
    """
    if kind not in SCHEME_KINDS:
        raise InvalidParameter(f"unknown scheme kind {kind!r}; expected one of {SCHEME_KINDS}")
    unknown = set(params) - {"L", "custom_log_coeffs", "custom_coeffs"}
    if unknown:
        raise InvalidParameter(f"unexpected scheme parameters {sorted(unknown)}")

    if kind == "custom":
        logs = params.get("custom_log_coeffs")
        if logs is None and params.get("custom_coeffs") is not None:
            raw = np.asarray(params["custom_coeffs"], dtype=float)
            if np.any(raw < 0):
                raise InvalidParameter("custom coefficients must be nonnegative")
            with np.errstate(divide="ignore"):
                logs = np.log(raw)
        if logs is None or len(logs) == 0:
            raise InvalidParameter("custom scheme needs a nonempty coefficient sequence")
        logs = tuple(float(v) for v in logs)
        if any(math.isnan(v) or v == math.inf for v in logs):
            raise InvalidParameter("custom log coefficients must be finite or -inf")
        if all(v == -math.inf for v in logs):
            raise InvalidParameter("custom scheme needs at least one positive coefficient")
        if n is None:
            n = len(logs) - 1
        if n != len(logs) - 1:
            raise InvalidParameter(f"custom sequence has length {len(logs)}, expected n+1 = {n + 1}")
        return CoefficientScheme("custom", int(n), custom_log_coeffs=logs)

    if n is None or isinstance(n, bool) or int(n) != n or n < 0:
        raise InvalidParameter(f"degree bound n must be a nonnegative integer, got {n!r}")
    n = int(n)
    if kind == "hyperbolic":
        L = params.get("L")
        if L is None or not L > 0 or not math.isfinite(L):
            raise InvalidParameter(f"hyperbolic scheme needs L > 0, got {L!r}")
        return CoefficientScheme("hyperbolic", n, L=float(L))
    if kind == "elliptic_rescaled" and n == 0:
        raise InvalidParameter("elliptic_rescaled needs n >= 1")
    return CoefficientScheme(kind, n)


def log_coefficient(scheme: CoefficientScheme, i: int) -> float:
    """``log c_i`` via log-gamma; ``-inf`` iff ``c_i = 0``."""
    if not 0 <= i <= scheme.n:
        raise IndexError(f"coefficient index {i} outside 0..{scheme.n}")
    i = int(i)
    n = scheme.n
    kind = scheme.kind
    if kind == "kac":
        return 0.0
    if kind == "flat":
        return -0.5 * math.lgamma(i + 1)
    if kind == "custom":
        return scheme.custom_log_coeffs[i]
    if kind == "hyperbolic":
        return 0.5 * (math.lgamma(scheme.L + i) - math.lgamma(scheme.L) - math.lgamma(i + 1))
    log_binom = math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
    if kind == "elliptic":
        return 0.5 * log_binom
    return 0.5 * (log_binom - i * math.log(n))


# ---------------------------------------------------------------------------
# Atom distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomDistribution:
    family: str
    is_real: bool
    moments: Mapping[tuple[int, int], float] = field(compare=False, repr=False)
    values: tuple[complex, ...] | None = None
    probs: tuple[float, ...] | None = None

    @property
    def atom_id(self) -> str:
        if self.family != "custom_discrete":
            return self.family
        payload = json.dumps([[repr(complex(v)) for v in self.values], [repr(p) for p in self.probs]])
        return "custom_discrete:" + hashlib.sha256(payload.encode()).hexdigest()[:12]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        fam = self.family
        if fam == "gaussian_real":
            return rng.standard_normal(size)
        if fam == "gaussian_complex":
            g = rng.standard_normal((2, size)) * math.sqrt(0.5)
            return g[0] + 1j * g[1]
        if fam == "bernoulli":
            return rng.integers(0, 2, size).astype(float) * 2.0 - 1.0
        if fam == "uniform_real":
            s3 = math.sqrt(3.0)
            return rng.uniform(-s3, s3, size)
        if fam == "uniform_complex_disk":
            u = rng.random((2, size))
            return math.sqrt(2.0) * np.sqrt(u[0]) * np.exp(2j * math.pi * u[1])
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.probs))
        vals = np.asarray(self.values, dtype=complex)[idx]
        return vals.real.copy() if self.is_real else vals

    def to_dict(self) -> dict:
        if self.family != "custom_discrete":
            return {"family": self.family}
        vals = [[v.real, v.imag] if not self.is_real else v.real for v in map(complex, self.values)]
        return {"family": self.family, "values": vals, "probs": list(self.probs), "normalize": False}

    @classmethod
    def from_dict(cls, spec: Mapping) -> "AtomDistribution":
        spec = dict(spec)
        family = spec.pop("family", None)
        return make_atom(family, **spec)


def _continuous_moments(family: str) -> dict[tuple[int, int], float]:
    # E[Re^a Im^b]; odd orders vanish for all built-in families by symmetry
    zero = {(a, b): 0.0 for a in range(MOMENT_ORDER + 1) for b in range(MOMENT_ORDER + 1 - a)}
    m = dict(zero)
    m[(0, 0)] = 1.0
    if family == "gaussian_real":
        m.update({(2, 0): 1.0, (4, 0): 3.0})
    elif family == "bernoulli":
        m.update({(2, 0): 1.0, (4, 0): 1.0})
    elif family == "uniform_real":
        m.update({(2, 0): 1.0, (4, 0): 9.0 / 5.0})
    elif family == "gaussian_complex":
        m.update({(2, 0): 0.5, (0, 2): 0.5, (4, 0): 0.75, (0, 4): 0.75, (2, 2): 0.25})
    elif family == "uniform_complex_disk":
        # uniform on the disk of radius sqrt(2): E r^4 = 4/3
        m.update({(2, 0): 0.5, (0, 2): 0.5, (4, 0): 0.5, (0, 4): 0.5, (2, 2): 1.0 / 6.0})
    return m


def _discrete_moments(values: np.ndarray, probs: np.ndarray) -> dict[tuple[int, int], float]:
    re, im = values.real, values.imag
    out = {}
    for a in range(MOMENT_ORDER + 1):
        for b in range(MOMENT_ORDER + 1 - a):
            out[(a, b)] = float(math.fsum(probs * re**a * im**b))
    return out


def make_atom(family: str, values: Sequence | None = None, probs: Sequence | None = None,
              normalize: bool = True) -> AtomDistribution:
    """Build an atom distribution.

    Built-in families are already mean zero and unit variance.  For
    ``custom_discrete`` the support ``values`` (real numbers or ``[re, im]``
    pairs) is shifted and scaled to mean 0, ``E|xi|^2 = 1`` unless
    ``normalize=False``.
    """
    if family not in ATOM_FAMILIES:
        raise InvalidParameter(f"unknown atom family {family!r}; expected one of {ATOM_FAMILIES}")
    if family != "custom_discrete":
        if values is not None or probs is not None:
            raise InvalidParameter(f"{family} takes no values/probs")
        is_real = family in ("gaussian_real", "bernoulli", "uniform_real")
        return AtomDistribution(family, is_real, _continuous_moments(family))

    if values is None or len(values) == 0:
        raise InvalidParameter("custom_discrete needs a nonempty list of values")
    vals = np.array([complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in values])
    p = np.full(len(vals), 1.0 / len(vals)) if probs is None else np.asarray(probs, dtype=float)
    if p.shape != vals.shape or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
        raise InvalidParameter("probs must be nonnegative, match values, and sum to 1")
    if normalize:
        vals = vals - np.sum(p * vals)
        var = float(np.sum(p * np.abs(vals) ** 2))
        if var == 0:
            raise InvalidParameter("custom_discrete atom is degenerate (zero variance)")
        vals = vals / math.sqrt(var)
    is_real = bool(np.all(vals.imag == 0))
    return AtomDistribution(
        "custom_discrete",
        is_real,
        _discrete_moments(vals, p),
        values=tuple(complex(v) for v in vals),
        probs=tuple(float(x) for x in p),
    )


def moments_match(atom_a: AtomDistribution, atom_b: AtomDistribution, order: int,
                  atol: float = 1e-12) -> bool:
    """True iff ``E Re^a Im^b`` agree for every ``a + b <= order``."""
    if not 0 <= order <= MOMENT_ORDER:
        raise InvalidParameter(f"moment order must be in 0..{MOMENT_ORDER}")
    for a in range(order + 1):
        for b in range(order + 1 - a):
            try:
                ma, mb = atom_a.moments[(a, b)], atom_b.moments[(a, b)]
            except KeyError as exc:
                raise KeyError(f"missing moment entry E Re^{a} Im^{b}") from exc
            if abs(ma - mb) > atol:
                return False
    return True


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _stream_tag(atom_id: str) -> int:
    return int.from_bytes(hashlib.sha256(atom_id.encode()).digest()[:8], "little")


def trial_generator(master_seed: int, trial_index: int, atom_id: str = "") -> np.random.Generator:
    """Counter-based generator for one trial.

    The Philox key is ``(master_seed, mix(trial_index, atom))`` so every trial
    owns an independent stream that does not depend on scheduling.
    """
    k1 = _splitmix64(_splitmix64(int(trial_index) & _MASK64) ^ _stream_tag(atom_id))
    key = np.array([int(master_seed) & _MASK64, k1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class PolySample:
    """One realization ``f(z) = exp(log_scale) * sum_i coeffs[i] z**i``.

    ``log_abs`` and ``phase`` hold the unscaled coefficients in log-magnitude
    form; ``coeffs`` is the materialized scaled array (entries far below the
    largest one may underflow to zero there, but never in ``log_abs``).
    """

    scheme_id: str
    atom_id: str
    n: int
    master_seed: int | None
    trial_index: int | None
    log_abs: np.ndarray
    phase: np.ndarray
    is_real: bool

    @property
    def log_scale(self) -> float:
        finite = self.log_abs[np.isfinite(self.log_abs)]
        return float(finite.max()) if finite.size else 0.0

    @property
    def coeffs(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return self.phase * np.exp(self.log_abs - self.log_scale)

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[complex], n: int | None = None,
                    label: str = "fixed") -> "PolySample":
        """Wrap a deterministic coefficient list (index ``i`` multiplies ``z**i``)."""
        a = np.asarray(coeffs, dtype=complex)
        if n is None:
            n = a.size - 1
        if a.size != n + 1:
            raise InvalidParameter(f"expected {n + 1} coefficients, got {a.size}")
        mag = np.abs(a)
        with np.errstate(divide="ignore"):
            log_abs = np.log(mag)
        phase = np.where(mag > 0, a / np.where(mag > 0, mag, 1.0), 0.0)
        return cls(label, label, n, None, None, log_abs, phase.astype(complex),
                   bool(np.all(a.imag == 0)))


def sample_polynomial(scheme: CoefficientScheme, atom: AtomDistribution,
                      master_seed: int, trial_index: int) -> PolySample:
    """Draw ``a_i = c_i xi_i`` for one trial, reproducibly."""
    rng = trial_generator(master_seed, trial_index, atom.atom_id)
    xi = atom.draw(rng, scheme.n + 1).astype(complex)
    mag = np.abs(xi)
    with np.errstate(divide="ignore"):
        log_abs = scheme.log_coefficients() + np.log(mag)
    log_abs[mag == 0] = -np.inf
    phase = np.where(mag > 0, xi / np.where(mag > 0, mag, 1.0), 0.0).astype(complex)
    phase[~np.isfinite(log_abs)] = 0.0
    return PolySample(scheme.scheme_id, atom.atom_id, scheme.n, int(master_seed),
                      int(trial_index), log_abs, phase, atom.is_real)


def _float_token(v: float):
    return v if math.isfinite(v) else ("-inf" if v < 0 else "inf")


def _parse_float_token(v) -> float:
    return float(v)
