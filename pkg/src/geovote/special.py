"""Small special-function kernel for the report statistics.

Implements just what the rank test needs: the regularized incomplete beta
function (modified Lentz continued fraction), the upper-tail probability
of the F distribution built on it, and the standard normal CDF/quantile
for the pairwise-difference threshold. Accuracy target is 1e-10 relative
over the parameter ranges the harness uses.
"""

from __future__ import annotations

import math

from .errors import ConfigurationError, NumericError

_MAX_ITER = 500
_EPS = 1e-15
_FPMIN = 1e-300


def log_beta(a: float, b: float) -> float:
    """log of the beta function B(a, b) for a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise ConfigurationError("log_beta requires positive arguments")
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    The continued fraction converges fast only for x below the split
    point (a + 1) / (a + b + 2); above it the symmetry
    I_x(a, b) = 1 - I_{1-x}(b, a) is applied first.
    """
    if a <= 0.0 or b <= 0.0:
        raise ConfigurationError("betainc requires positive shape arguments")
    if not (0.0 <= x <= 1.0):
        raise ConfigurationError(f"betainc requires x in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def f_sf(value: float, df1: float, df2: float) -> float:
    """Upper-tail probability P(F > value) for an F(df1, df2) variate."""
    if df1 <= 0.0 or df2 <= 0.0:
        raise ConfigurationError("f_sf requires positive degrees of freedom")
    if not math.isfinite(value):
        if value > 0:
            return 0.0
        raise ConfigurationError("f_sf requires a finite statistic")
    if value <= 0.0:
        return 1.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * value))


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the error function."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF by bisection (monotone, well bracketed)."""
    if not (0.0 < p < 1.0):
        raise ConfigurationError(f"normal_quantile requires p in (0, 1), got {p!r}")
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)
