"""Upper-tail probabilities for the normal, chi-square and F distributions.

Built from a Lanczos log-gamma, the regularized incomplete gamma function
(series / continued fraction) and the regularized incomplete beta function
(continued fraction).
"""
from __future__ import annotations

import math

from ..errors import InvalidParameter

_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993, 676.5203681218851, -1259.1392167224028, 771.32342877765313,
    -176.61502916214059, 12.507343278686905, -0.13857109526572012,
    9.9843695780195716e-6, 1.5056327351493116e-7,
)
_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def log_gamma(x: float) -> float:
    """log|Gamma(x)| for x > 0."""
    if x <= 0:
        raise InvalidParameter(f"log_gamma needs x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    x -= 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return 0.5 * math.log(2 * math.pi) + (x + 0.5) * math.log(t) - t + math.log(acc)


def _gamma_series(a, x):
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - log_gamma(a))


def _gamma_cf(a, x):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = _TINY if abs(d) < _TINY else d
        c = b + an / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - log_gamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if a <= 0 or x < 0:
        raise InvalidParameter(f"gamma_q needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def gamma_p(a: float, x: float) -> float:
    if a <= 0 or x < 0:
        raise InvalidParameter(f"gamma_p needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def beta_inc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0 or not 0.0 <= x <= 1.0:
        raise InvalidParameter(f"beta_inc needs a, b > 0 and 0 <= x <= 1, got {a}, {b}, {x}")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(
        log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def normal_sf(x: float) -> float:
    """P(Z > x) for a standard normal, via erfc(z) = Q(1/2, z^2)."""
    if not math.isfinite(x):
        if math.isnan(x):
            raise InvalidParameter("x must be finite")
        return 0.0 if x > 0 else 1.0
    z = abs(x) / math.sqrt(2.0)
    upper = 0.5 * gamma_q(0.5, z * z) if z > 0 else 0.5
    return upper if x >= 0 else 1.0 - upper


def chi2_sf(x: float, df: float) -> float:
    if df < 1:
        raise InvalidParameter(f"chi-square df must be >= 1, got {df}")
    if math.isinf(x) and x > 0:
        return 0.0
    if not math.isfinite(x):
        raise InvalidParameter("x must be finite")
    if x <= 0:
        return 1.0
    return gamma_q(df / 2.0, x / 2.0)


def f_sf(x: float, df1: float, df2: float) -> float:
    if df1 < 1 or df2 < 1:
        raise InvalidParameter(f"F df must be >= 1, got ({df1}, {df2})")
    if math.isinf(x) and x > 0:
        return 0.0
    if not math.isfinite(x):
        raise InvalidParameter("x must be finite")
    if x <= 0:
        return 1.0
    return beta_inc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x))


def tail_probability(dist: str, x: float, *df: float) -> float:
    """Upper-tail probability: ``dist`` is ``"normal"``, ``"chi_square"`` (df) or ``"f"`` (df1, df2)."""
    if dist == "normal":
        if df:
            raise InvalidParameter("normal takes no degrees of freedom")
        return normal_sf(x)
    if dist == "chi_square":
        if len(df) != 1:
            raise InvalidParameter("chi_square takes one df")
        return chi2_sf(x, df[0])
    if dist == "f":
        if len(df) != 2:
            raise InvalidParameter("f takes two df")
        return f_sf(x, df[0], df[1])
    raise InvalidParameter(f"unknown distribution {dist!r}")
