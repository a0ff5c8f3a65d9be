"""Numerical primitives: factorial products, the 1F1 series and endpoint-aware quadrature."""
from __future__ import annotations

import dataclasses
import math
import warnings

from scipy import integrate

from .errors import NonConvergence, RangeError

DEFAULT_SERIES_TOL = 1e-12
DEFAULT_QUAD_TOL = 1e-10
MAX_SERIES_TERMS = 10**6


@dataclasses.dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    truncation_bound: float


def rising_factorial(a: float, b: int) -> float:
    """Return ``a (a+1) ... (a+b-1)``; the empty product (``b == 0``) is 1."""
    if b < 0 or int(b) != b:
        raise RangeError("b", f"b must be a non-negative integer, got {b!r}")
    out = 1.0
    for i in range(int(b)):
        out *= a + i
    if not math.isfinite(out):
        raise OverflowError(f"rising factorial ({a})_{b} overflows double precision")
    return out


def falling_factorial(a: float, b: int) -> float:
    """Return ``a (a-1) ... (a-b+1)``; the empty product (``b == 0``) is 1."""
    if b < 0 or int(b) != b:
        raise RangeError("b", f"b must be a non-negative integer, got {b!r}")
    out = 1.0
    for i in range(int(b)):
        out *= a - i
    if not math.isfinite(out):
        raise OverflowError(f"falling factorial ({a})_{b} overflows double precision")
    return out


def hyp1f1_series(
    a: float,
    b: float,
    z: float,
    tol: float = DEFAULT_SERIES_TOL,
    max_terms: int = MAX_SERIES_TERMS,
) -> SeriesResult:
    """Sum the confluent hypergeometric series ``1F1(a; b; z)`` for ``z >= 0``.

    Terms follow ``t[m+1] = t[m] (a+m) z / ((b+m)(m+1))``.  Summation stops
    once the current term is below ``tol`` times the partial sum and the
    geometric bound on the remaining tail, ``t[m] r / (1 - r)`` with ``r``
    the current term ratio, is below the same threshold.  The bound is only
    trusted once the ratio has started to decrease.
    """
    if b <= 0:
        raise RangeError("b", f"b must be > 0, got {b}")
    if z < 0:
        raise RangeError("z", f"z must be >= 0, got {z}")
    if tol <= 0:
        raise RangeError("tol", f"tol must be > 0, got {tol}")

    total = 1.0
    term = 1.0
    m = 0
    while True:
        ratio = (a + m) * z / ((b + m) * (m + 1))
        if term == 0.0 or ratio == 0.0:
            return SeriesResult(total, m + 1, 0.0)
        if abs(term) <= tol * abs(total) and abs(ratio) < 1.0:
            next_ratio = (a + m + 1) * z / ((b + m + 1) * (m + 2))
            if abs(next_ratio) <= abs(ratio):
                tail = abs(term) * abs(ratio) / (1.0 - abs(ratio))
                if tail <= tol * abs(total):
                    return SeriesResult(total, m + 1, tail)
        if m + 1 >= max_terms:
            raise NonConvergence(
                f"1F1({a}; {b}; {z}) did not reach tol={tol} within {max_terms} terms"
            )
        term *= ratio
        total += term
        m += 1
        if not math.isfinite(total):
            raise OverflowError(f"1F1({a}; {b}; {z}) overflows double precision")


def _substitution_power(exponent: float) -> int:
    # x = u**p turns x**e dx into p u**(p(e+1)-1) du; p(e+1) >= 2 keeps it C^1
    if exponent >= 0:
        return 1
    if exponent <= -1:
        raise RangeError("exponent", f"endpoint exponent {exponent} is not integrable")
    return max(1, math.ceil(2.0 / (exponent + 1.0)))


def integrate_adaptive(
    f,
    tol: float = DEFAULT_QUAD_TOL,
    *,
    left_exponent: float = 0.0,
    right_exponent: float = 0.0,
    rtol: float = 0.0,
    limit: int = 500,
    with_complement: bool = False,
) -> float:
    """Integrate ``f`` over (0, 1).

    ``left_exponent``/``right_exponent`` describe the known endpoint
    behaviour ``x**left_exponent`` near 0 and ``(1-x)**right_exponent``
    near 1.  Negative exponents trigger the substitution ``x = u**p`` (and
    ``1 - x = v**q``) so the transformed integrand is bounded.  Each half
    interval is handed to adaptive Gauss-Kronrod quadrature.

    With ``with_complement=True`` the integrand is called as ``f(x, 1 - x)``
    where the second argument is computed without cancellation, which
    matters when the singularity sits at ``x = 1``.

    The estimated error is at most ``max(tol, rtol * |result|)``.

    Raises
    ------
    NonConvergence
        If the subdivision limit is reached first.
    """
    if tol <= 0 and rtol <= 0:
        raise RangeError("tol", "tol or rtol must be > 0")
    p = _substitution_power(left_exponent)
    q = _substitution_power(right_exponent)

    if with_complement:
        g = f
    else:
        def g(x, xc):
            return f(x)

    def left(u):
        x = u**p
        return g(x, 1.0 - x) * p * u ** (p - 1) if u > 0 or p == 1 else 0.0

    def right(v):
        xc = v**q
        return g(1.0 - xc, xc) * q * v ** (q - 1) if v > 0 or q == 1 else 0.0

    half = 0.5
    pieces = ((left, 0.0, half ** (1.0 / p)), (right, 0.0, half ** (1.0 / q)))
    value = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for piece, lo, hi in pieces:
            try:
                v, e = integrate.quad(piece, lo, hi, epsabs=tol / 2, epsrel=rtol, limit=limit)
            except integrate.IntegrationWarning as exc:
                raise NonConvergence(f"adaptive quadrature failed: {exc}") from exc
            value += v
            err += e
    if err > max(tol, rtol * abs(value)):
        raise NonConvergence(f"quadrature error estimate {err:.3g} exceeds tolerance")
    return value
