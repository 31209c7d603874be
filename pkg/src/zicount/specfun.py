"""Special functions used by the count distributions and residual diagnostics.

Everything here accepts scalars or numpy arrays and returns the same shape.
Out-of-domain arguments raise :class:`DomainError` instead of producing NaN.
"""

from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "log_gamma",
    "log_beta",
    "log_gamma_ratio",
    "log_bessel_k_half",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])


class DomainError(ValueError):
    """Argument outside the domain of a special function or distribution."""


def _result(out, scalar):
    return float(out) if scalar else out


def _lanczos_log_gamma(x):
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _LOG_SQRT_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``.

    Lanczos series for ``x >= 0.5``; the reflection formula below that.
    Integers 1 and 2 return exactly 0.
    """
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise DomainError("log_gamma requires finite x > 0")
    out = np.empty_like(x)
    big = x >= 0.5
    out[big] = _lanczos_log_gamma(x[big])
    small = ~big
    if np.any(small):
        xs = x[small]
        out[small] = np.log(np.pi / np.sin(np.pi * xs)) - _lanczos_log_gamma(1.0 - xs)
    out[(x == 1.0) | (x == 2.0)] = 0.0
    return _result(out, scalar)


def _stirling_tail(z):
    zi = 1.0 / z
    z2 = zi * zi
    return zi * (1.0 / 12.0 - z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 / 1680.0)))


def log_gamma_ratio(x, r):
    """ln Γ(x + r) - ln Γ(x) for x > 0, x + r > 0.

    For large x the difference of two large log-gammas cancels badly; there
    the Stirling form (x - 1/2) log1p(r/x) + r ln(x + r) - r plus the
    difference of the asymptotic tails is used instead.
    """
    x, r = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))
    if not (np.all(x > 0) and np.all(x + r > 0)):
        raise DomainError("log_gamma_ratio requires x > 0 and x + r > 0")
    big = (x >= 50.0) & (x + r >= 50.0)
    out = np.empty_like(x)
    xb, rb = x[big], r[big]
    out[big] = ((xb - 0.5) * np.log1p(rb / xb) + rb * np.log(xb + rb) - rb
                + _stirling_tail(xb + rb) - _stirling_tail(xb))
    small = ~big
    out[small] = log_gamma(x[small] + r[small]) - log_gamma(x[small])
    return out if out.ndim else float(out)


def log_beta(a, b):
    """ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a + b)."""
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise DomainError("log_beta requires a > 0 and b > 0")
    out = log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    return _result(np.asarray(out), scalar)


def _log_bessel_k_half_scaled(m, t):
    """ln(e^t K_{m-1/2}(t)); broadcasting over integer ``m >= 0`` and ``t > 0``.

    Uses the ratio form of the upward recurrence,
    r_j = K_{j+1/2}/K_{j-1/2} = 1/r_{j-1} + (2j - 1)/t with r_0 = 1,
    so nothing overflows for large orders. The cumulative log-ratios are
    tabulated over t's own shape and then gathered at m.
    """
    m = np.asarray(m, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    top = max(int(m.max()) if m.size else 0, 1)
    steps = np.zeros((top,) + t.shape)
    ratio = np.ones_like(t)
    for j in range(1, top):
        ratio = 1.0 / ratio + (2.0 * j - 1.0) / t
        steps[j] = steps[j - 1] + np.log(ratio)
    shape = np.broadcast_shapes(m.shape, t.shape)
    pad = (1,) * (len(shape) - t.ndim)
    table = np.broadcast_to(steps.reshape((top,) + pad + t.shape), (top,) + shape)
    idx = np.broadcast_to(np.maximum(m - 1, 0), shape)[None]
    base = 0.5 * np.log(np.pi / (2.0 * t))
    return base + np.take_along_axis(table, idx, axis=0)[0]


def log_bessel_k_half(m, t):
    """ln K_{m-1/2}(t), the modified Bessel function of the third kind at
    half-integer order, for integer ``m >= 0`` and ``t > 0``.

    K_{-1/2} = K_{1/2} = sqrt(pi / 2t) e^{-t}; higher orders come from
    K_{v+1}(t) = K_{v-1}(t) + (2v/t) K_v(t), carried as log-ratios.
    """
    scalar = np.ndim(m) == 0 and np.ndim(t) == 0
    m_arr = np.asarray(m)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(t_arr > 0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("log_bessel_k_half requires finite t > 0")
    if np.any(m_arr < 0) or not np.all(np.equal(np.mod(m_arr, 1), 0)):
        raise DomainError("order index m must be a nonnegative integer")
    out = _log_bessel_k_half_scaled(m_arr.astype(np.int64), t_arr) - t_arr
    return _result(np.asarray(out), scalar)


def std_normal_pdf(z):
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    return _result(np.exp(-0.5 * z * z - _LOG_SQRT_2PI), scalar)


def std_normal_cdf(z):
    """Standard normal cdf.

    The lower tail is always computed directly with erfc and the upper tail
    as its complement, so Phi(-z) and 1 - Phi(z) come from the same number.
    """
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    lower = 0.5 * special.erfc(np.abs(z) / np.sqrt(2.0))
    out = np.where(z <= 0, lower, 1.0 - lower)
    return _result(out, scalar)


# Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _acklam(p):
    q = np.minimum(p, 1.0 - p)
    z = np.empty_like(p)
    central = q >= _P_LOW
    r = p[central] - 0.5
    s = r * r
    z[central] = (((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r / \
        (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0)
    tail = ~central
    u = np.sqrt(-2.0 * np.log(q[tail]))
    zt = (((((_C[0] * u + _C[1]) * u + _C[2]) * u + _C[3]) * u + _C[4]) * u + _C[5]) / \
        ((((_D[0] * u + _D[1]) * u + _D[2]) * u + _D[3]) * u + 1.0)
    z[tail] = np.where(p[tail] < 0.5, zt, -zt)
    return z


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on (0, 1).

    Rational starting value refined by Newton steps on the tail that is
    numerically resolved (lower tail below the median, upper above).
    """
    scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("std_normal_quantile requires 0 < p < 1")
    z = _acklam(p)
    upper = p > 0.5
    # Newton on the smaller tail probability keeps relative accuracy there
    target = np.where(upper, 1.0 - p, p)
    for _ in range(2):
        tail = 0.5 * special.erfc(np.abs(z) / np.sqrt(2.0))
        dens = np.exp(-0.5 * z * z - _LOG_SQRT_2PI)
        step = (tail - target) / dens
        z = np.where(upper, z + step, z - step)
    z[p == 0.5] = 0.0
    return _result(z if not scalar else z[0], scalar)
