"""Special functions for the closed-form freshness metrics.

Incomplete gammas use the usual split between the power series (x < a + 1)
and the Lentz continued fraction (x >= a + 1). Log-gamma comes from
``scipy.special.gammaln``. Infinite series are summed in log-magnitude space
through :class:`LogSum`.
"""

from __future__ import annotations

import math
import sys
from typing import Callable

from scipy import special

from ledger_freshness.exceptions import ConvergenceError, DomainError
from ledger_freshness.models import SeriesControl

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 10_000
# Log-gap below which opposite-sign terms are taken to cancel exactly.
_CANCEL_GAP = 8.0 * sys.float_info.epsilon
# Consecutive negligible terms required before a series is declared converged.
QUIET_TERMS = 3

DEFAULT_CONTROL = SeriesControl()


def _check_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


def ln_gamma(x: float) -> float:
    """Natural log of the Gamma function.

    Raises:
        DomainError: If x is not positive.
    """
    _check_positive("x", x)
    return float(special.gammaln(x))


def ln_beta(a: float, b: float) -> float:
    _check_positive("a", a)
    _check_positive("b", b)
    return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)


def beta_fn(a: float, b: float) -> float:
    """Beta function B(a, b) = Γ(a)Γ(b)/Γ(a+b), evaluated through log-gammas."""
    return math.exp(ln_beta(a, b))


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total
    raise ConvergenceError(
        f"incomplete gamma series failed for a={a}, x={x}", last_term=abs(term), terms=_MAX_ITER
    )


def _gamma_continued_fraction(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(
        f"incomplete gamma continued fraction failed for a={a}, x={x}",
        last_term=abs(delta - 1.0),
        terms=_MAX_ITER,
    )


def regularized_gamma(a: float, x: float) -> tuple[float, float]:
    """Regularized incomplete gammas (P(a, x), Q(a, x)) with P + Q = 1.

    Args:
        a: Shape, strictly positive.
        x: Upper integration limit, non-negative (``math.inf`` allowed).

    Raises:
        DomainError: On invalid inputs.

    Returns:
        Tuple ``(P, Q)``.
    """
    _check_positive("a", a)
    if not x >= 0:
        raise DomainError(f"x must be non-negative, got {x!r}")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    log_prefix = a * math.log(x) - x - ln_gamma(a)
    if x < a + 1.0:
        p = math.exp(log_prefix) * _gamma_series(a, x)
        p = min(p, 1.0)
        return p, 1.0 - p
    q = math.exp(log_prefix) * _gamma_continued_fraction(a, x)
    q = min(q, 1.0)
    return 1.0 - q, q


def lower_inc_gamma(a: float, x: float) -> float:
    """Lower incomplete gamma γ(a, x) = ∫₀ˣ t^{a-1} e^{-t} dt."""
    p, _ = regularized_gamma(a, x)
    return p * math.exp(ln_gamma(a))


def upper_inc_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Γ(a, x) = Γ(a) - γ(a, x)."""
    _, q = regularized_gamma(a, x)
    return q * math.exp(ln_gamma(a))


def kummer_1f1(a: float, b: float, z: float, ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """Confluent hypergeometric function ₁F₁(a; b; z).

    Negative arguments go through the Kummer transform
    ₁F₁(a; b; z) = e^z ₁F₁(b - a; b; -z), so the power series is only ever
    summed for z >= 0. All terms are positive when z >= 0 or b >= a.

    Raises:
        DomainError: If b is a non-positive integer.
        ConvergenceError: If the series does not settle within ``ctl.max_terms``.
    """
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"b must not be a non-positive integer, got {b!r}")
    if z == 0:
        return 1.0
    if z < 0:
        return math.exp(z) * _kummer_series(b - a, b, -z, ctl)
    return _kummer_series(a, b, z, ctl)


def _kummer_series(a: float, b: float, z: float, ctl: SeriesControl) -> float:
    term = 1.0
    total = 1.0
    quiet = 0
    for k in range(ctl.max_terms):
        term *= (a + k) * z / ((b + k) * (k + 1))
        total += term
        if term == 0.0:
            return total
        if abs(term) <= ctl.rel_tolerance * abs(total):
            quiet += 1
            if quiet >= QUIET_TERMS:
                return total
        else:
            quiet = 0
    raise ConvergenceError(
        f"1F1({a}; {b}; {z}) did not converge",
        last_term=abs(term),
        terms=ctl.max_terms,
    )


class LogSum:
    """Signed sum kept as (log|S|, sign(S)).

    Terms are added as ``(log_magnitude, sign)`` pairs, so sums whose terms
    under- or overflow in linear space stay representable.
    """

    __slots__ = ("log_abs", "sign")

    def __init__(self) -> None:
        self.log_abs = -math.inf
        self.sign = 0

    def add(self, log_mag: float, sign: int = 1) -> None:
        if sign == 0 or log_mag == -math.inf:
            return
        if self.sign == 0:
            self.log_abs, self.sign = log_mag, (1 if sign > 0 else -1)
            return
        sign = 1 if sign > 0 else -1
        hi, lo = (log_mag, self.log_abs) if log_mag > self.log_abs else (self.log_abs, log_mag)
        if sign == self.sign:
            self.log_abs = hi + math.log1p(math.exp(lo - hi))
            return
        if hi - lo <= _CANCEL_GAP:
            self.log_abs, self.sign = -math.inf, 0
            return
        if log_mag > self.log_abs:
            self.sign = sign
        self.log_abs = hi + math.log1p(-math.exp(lo - hi))

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)


def sum_log_series(
    log_term: Callable[[int], tuple[float, int]],
    ctl: SeriesControl,
    *,
    what: str = "series",
    hint: str | None = None,
) -> LogSum:
    """Sum ``log_term(0), log_term(1), ...`` until it settles.

    A term is negligible when its magnitude relative to the running sum is
    below ``ctl.rel_tolerance``; the sum stops after ``QUIET_TERMS``
    consecutive negligible terms.

    Raises:
        ConvergenceError: If ``ctl.max_terms`` terms are not enough.
    """
    acc = LogSum()
    log_tol = math.log(ctl.rel_tolerance)
    quiet = 0
    log_mag = -math.inf
    for i in range(ctl.max_terms):
        log_mag, sign = log_term(i)
        acc.add(log_mag, sign)
        if log_mag == -math.inf or (acc.sign != 0 and log_mag - acc.log_abs < log_tol):
            quiet += 1
            if quiet >= QUIET_TERMS:
                return acc
        else:
            quiet = 0
    last = math.exp(min(log_mag, 700.0)) if log_mag > -math.inf else 0.0
    raise ConvergenceError(f"{what} did not converge", last_term=last, terms=ctl.max_terms, hint=hint)
