"""Compiled kernels for Aberth-Ehrlich iteration.

All routines work on a *balanced* coefficient vector ``b`` (``b[0] != 0`` and
``b[-1] != 0``), index ``i`` multiplying ``w**i``.  Evaluation switches to the
reversed polynomial outside the unit disk so Horner never overflows.
"""

import numpy as np
from numba import njit

_EPS = np.finfo(np.float64).eps


@njit(cache=True, nogil=True)
def log_derivative(b, absb, w):
    """Return ``(is_zero, p'(w)/p(w), backward_error)`` at ``w``.

    ``absb`` is ``abs(b)``, passed in to keep square roots out of the loop.
    """
    m = b.size - 1
    aw = abs(w)
    if aw <= 1.0:
        p = b[m]
        dp = 0j
        ap = absb[m]
        for i in range(m - 1, -1, -1):
            dp = dp * w + p
            p = p * w + b[i]
            ap = ap * aw + absb[i]
        if p == 0:
            return True, 0j, 0.0
        return False, dp / p, abs(p) / ap
    u = 1.0 / w
    au = abs(u)
    q = b[0]
    dq = 0j
    aq = absb[0]
    for i in range(1, m + 1):
        dq = dq * u + q
        q = q * u + b[i]
        aq = aq * au + absb[i]
    if q == 0:
        return True, 0j, 0.0
    # p(w) = w^m q(1/w)  =>  p'/p = m u - u^2 q'(u)/q(u)
    return False, m * u - u * u * dq / q, abs(q) / aq


@njit(cache=True, nogil=True)
def aberth(b, w, tol, max_iters):
    """Gauss-Seidel Aberth sweeps on ``w`` in place.

    A root is frozen once its step falls below ``tol * (1 + |w|)`` or its
    backward error reaches rounding level.  Returns ``(converged, sweeps)``.
    """
    m = w.size
    absb = np.abs(b)
    wr = w.real.copy()
    wi = w.imag.copy()
    done = np.zeros(m, dtype=np.bool_)
    berr_floor = 4.0 * (m + 1) * _EPS
    sweeps = 0
    for it in range(max_iters):
        sweeps = it + 1
        active = 0
        for k in range(m):
            if done[k]:
                continue
            active += 1
            wk = w[k]
            is_zero, g, berr = log_derivative(b, absb, wk)
            if is_zero:
                done[k] = True
                continue
            sr = 0.0
            si = 0.0
            xr = wk.real
            xi = wk.imag
            for j in range(m):
                dr = xr - wr[j]
                di = xi - wi[j]
                d2 = dr * dr + di * di
                if d2 > 0.0:
                    sr += dr / d2
                    si -= di / d2
            denom = g - complex(sr, si)
            if denom == 0:
                # stationary point of the Aberth correction; nudge off it
                step = tol * (1.0 + abs(wk)) * (1.0 + 1.0j)
            else:
                step = 1.0 / denom
            w[k] = wk - step
            wr[k] = w[k].real
            wi[k] = w[k].imag
            if abs(step) <= tol * (1.0 + abs(w[k])) or berr <= berr_floor:
                done[k] = True
        if active == 0:
            return True, sweeps
    for k in range(m):
        if not done[k]:
            return False, sweeps
    return True, sweeps


@njit(cache=True, nogil=True)
def polish(b, w):
    """One Newton step per root; returns the max backward error afterwards."""
    absb = np.abs(b)
    worst = 0.0
    for k in range(w.size):
        is_zero, g, berr = log_derivative(b, absb, w[k])
        if not is_zero and g != 0:
            cand = w[k] - 1.0 / g
            z2, g2, berr2 = log_derivative(b, absb, cand)
            # keep the step only if it does not worsen the backward error
            if z2:
                w[k] = cand
                berr = 0.0
            elif berr2 <= berr:
                w[k] = cand
                berr = berr2
        if berr > worst:
            worst = berr
    return worst


@njit(cache=True, nogil=True)
def backward_errors(b, w):
    absb = np.abs(b)
    out = np.empty(w.size)
    for k in range(w.size):
        _, _, out[k] = log_derivative(b, absb, w[k])
    return out
