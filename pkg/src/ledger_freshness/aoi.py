"""Closed-form freshness metrics.

Notation: X ~ Gamma(alpha, beta) is the consensus latency, T_int ~ Exp(rho)
the wait for the next effective arrival, W = X + T_int the inter-update time
and T_v = (v - T_tx)+. With S = X_{k-1} + X_k ~ Gamma(2 alpha, beta) every
violation probability reduces to regularized incomplete gammas plus the
discount term

    L(T_v) = E[exp(-rho (T_v - S)); S < T_v],

which is summed as a double series: the outer index counts Poisson(rho T_v)
events, the inner one runs the incomplete-gamma power series.
"""

from __future__ import annotations

import logging
import math

import mpmath
from scipy import integrate, special

from ledger_freshness.channel import transmission_latency_for
from ledger_freshness.exceptions import (
    ConvergenceError,
    DomainError,
    QuadratureError,
    SingularityError,
)
from ledger_freshness.models import (
    AoiModel,
    ChannelParams,
    GammaParams,
    SeriesControl,
    TargetAoi,
    ViolationResult,
)
from ledger_freshness.numerics import (
    DEFAULT_CONTROL,
    LogSum,
    kummer_1f1,
    ln_beta,
    ln_gamma,
    regularized_gamma,
    sum_log_series,
)

logger = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-7
SINGULAR_GAP = 1e-6
# Raw values further than this outside [0, 1] are not truncation noise.
CLAMP_SLACK = 1e-9

_AOI_HINT = "use aoi_violation_quadrature instead"
_PAOI_HINT = "use paoi_violation_quadrature or a Monte Carlo estimate of P[X + X' + Exp(rho) >= T_v]"


def aoi_model_for(
    gamma: GammaParams,
    rho_s: float,
    zeta: float,
    channel: ChannelParams,
    D: float,
) -> AoiModel:
    """Build the model for a source at target STP ``zeta``: rho = rho_s * zeta, T_tx = D / rate."""
    return AoiModel(gamma=gamma, rho=rho_s * zeta, t_tx=transmission_latency_for(channel, zeta, D))


def mean_cycle(model: AoiModel) -> float:
    """E[T_k] = 1/rho + alpha/beta."""
    return model.mean_cycle


def average_aoi(model: AoiModel) -> float:
    """Time-average AoI: E[W^2] / (2 E[W]) + alpha/beta + T_tx."""
    a, b, rho = model.gamma.alpha, model.gamma.beta, model.rho
    second_moment = 2.0 / rho**2 + 2.0 * a / (rho * b) + (a * a + a) / b**2
    return rho * b / (2.0 * (a * rho + b)) * second_moment + a / b + model.t_tx


def _clamp(raw: float, what: str) -> float:
    value = min(1.0, max(0.0, raw))
    if value != raw:
        excess = abs(raw - value)
        level = logging.WARNING if excess > CLAMP_SLACK else logging.DEBUG
        logger.log(level, "%s clamped from %.3e to %g", what, raw, value)
    return value


def _discount(shape2: float, beta: float, rho: float, t: float, ctl: SeriesControl, hint: str) -> float:
    """L(t) = E[exp(-rho (t - S)); S < t] for S ~ Gamma(shape2, beta), t > 0."""
    # Both terms of this bound dominate L; when it is below tolerance L is noise.
    _, q_half = regularized_gamma(shape2, beta * t / 2.0)
    if math.exp(-rho * t / 2.0) + q_half < ctl.rel_tolerance * 1e-3:
        return 0.0

    log_x = math.log(beta * t)
    log_rt = math.log(rho * t)
    head = -(rho + beta) * t + shape2 * log_x

    def outer(n: int) -> tuple[float, int]:
        state = [
            head
            + n * log_rt
            - math.log(shape2 + n)
            - ln_beta(shape2, n + 1.0)
            - ln_gamma(shape2 + n + 1.0)
        ]

        def inner(k: int) -> tuple[float, int]:
            if k:
                state[0] += log_x - math.log(shape2 + n + k)
            return state[0], 1

        return sum_log_series(inner, ctl, what=f"incomplete-gamma series (n={n})", hint=hint).log_abs, 1

    return sum_log_series(outer, ctl, what="Poisson-mixture series", hint=hint).value


def _aoi_violation_raw(model: AoiModel, t: float, ctl: SeriesControl) -> float:
    a, b, rho = model.gamma.alpha, model.gamma.beta, model.rho
    x = b * t
    q_a = regularized_gamma(a, x)[1]
    q_a1 = regularized_gamma(a + 1.0, x)[1]
    q_2a = regularized_gamma(2.0 * a, x)[1]
    q_2a1 = regularized_gamma(2.0 * a + 1.0, x)[1]
    discount = _discount(2.0 * a, b, rho, t, ctl, _AOI_HINT)

    # E[W] - E[min(W, (T_v - X_{k-1})+)], assembled from signed pieces.
    acc = LogSum()
    for value in (
        t * (q_a - q_2a),
        -(a / b) * q_a1,
        (2.0 * a / b) * q_2a1,
        (q_2a + discount) / rho,
    ):
        if value:
            acc.add(math.log(abs(value)), 1 if value > 0 else -1)
    return acc.value / model.mean_cycle


def aoi_violation(
    model: AoiModel,
    v: float | TargetAoi,
    ctl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """AoI violation probability P[Δ(t) >= v] from the series form.

    Raises:
        ConvergenceError: If a series does not settle within ``ctl``; the
            message points to :func:`aoi_violation_quadrature`.
    """
    t = model.slack(v)
    if t == 0:
        return 1.0
    return _clamp(_aoi_violation_raw(model, t, ctl), "AoI violation probability")


def paoi_violation(
    model: AoiModel,
    v: float | TargetAoi,
    ctl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Peak-AoI violation probability P[X_{k-1} + T_int + X_k + T_tx >= v].

    Raises:
        ConvergenceError: If the discount series does not settle within ``ctl``.
    """
    t = model.slack(v)
    if t == 0:
        return 1.0
    a, b, rho = model.gamma.alpha, model.gamma.beta, model.rho
    q_2a = regularized_gamma(2.0 * a, b * t)[1]
    raw = q_2a + _discount(2.0 * a, b, rho, t, ctl, _PAOI_HINT)
    return _clamp(raw, "PAoI violation probability")


def paoi_cdf(model: AoiModel, v: float | TargetAoi, ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    return 1.0 - paoi_violation(model, v, ctl)


def _gamma_pdf_factory(params: GammaParams):
    a, b = params.alpha, params.beta
    log_norm = a * math.log(b) - ln_gamma(a)

    def pdf(x: float) -> float:
        if x <= 0:
            if a > 1:
                return 0.0
            return b if a == 1 else math.inf
        return math.exp(log_norm + (a - 1.0) * math.log(x) - b * x)

    return pdf


def aoi_violation_quadrature(model: AoiModel, v: float | TargetAoi) -> float:
    """AoI violation probability by adaptive quadrature over the latency densities.

    P_v = E[T_k^v] / E[T_k] with
    E[T_k^v] = ∫₀^{T_v} E_1(x) f(x) dx + E[T_k] Q(alpha, beta T_v), where
    E_1(x) = E[T_k] - E[min(W, T_v - x)] and, for c > 0,
    E[min(W, c)] = ∫₀^c f(u) (u + (1 - e^{-rho (c - u)}) / rho) du + c Q(alpha, beta c).

    Raises:
        QuadratureError: If the accumulated error estimate exceeds 1e-7.
    """
    t = model.slack(v)
    if t == 0:
        return 1.0
    a, b, rho = model.gamma.alpha, model.gamma.beta, model.rho
    ew = model.mean_cycle
    pdf = _gamma_pdf_factory(model.gamma)
    opts = {"epsabs": 1e-11, "epsrel": 1e-11}

    def body(u: float, x: float) -> float:
        c = t - x
        return pdf(x) * pdf(u) * (u + (1.0 - math.exp(-rho * (c - u))) / rho)

    def edge(x: float) -> float:
        c = t - x
        return pdf(x) * c * float(special.gammaincc(a, b * c))

    inner, err_inner = integrate.dblquad(body, 0.0, t, 0.0, lambda x: t - x, **opts)
    capped, err_capped = integrate.quad(edge, 0.0, t, limit=200, **opts)
    err = (err_inner + err_capped) / ew
    if not err <= QUADRATURE_TOLERANCE:
        raise QuadratureError("AoI violation quadrature missed its tolerance", error_estimate=err)

    p_below = float(special.gammainc(a, b * t))
    q_above = float(special.gammaincc(a, b * t))
    numerator = ew * p_below - capped - inner + ew * q_above
    return _clamp(numerator / ew, "AoI violation probability (quadrature)")


def paoi_violation_quadrature(model: AoiModel, v: float | TargetAoi) -> float:
    """PAoI violation probability as 1 - ∫₀^{T_v} f_S(s) (1 - e^{-rho (T_v - s)}) ds."""
    t = model.slack(v)
    if t == 0:
        return 1.0
    shape2 = 2.0 * model.gamma.alpha
    pdf = _gamma_pdf_factory(GammaParams(alpha=shape2, beta=model.gamma.beta))
    rho = model.rho
    value, err = integrate.quad(
        lambda s: pdf(s) * -math.expm1(-rho * (t - s)), 0.0, t, epsabs=1e-12, epsrel=1e-12, limit=200
    )
    if not err <= QUADRATURE_TOLERANCE:
        raise QuadratureError("PAoI violation quadrature missed its tolerance", error_estimate=err)
    return _clamp(1.0 - value, "PAoI violation probability (quadrature)")


def _integer_shape(alpha: float) -> int:
    if not float(alpha).is_integer() or alpha < 1:
        raise DomainError(f"integer-shape form needs a positive integer alpha, got {alpha!r}")
    return int(alpha)


def aoi_violation_integer(model: AoiModel, v: float | TargetAoi) -> float:
    """AoI violation probability for integer alpha as a finite sum.

    With integer shapes every incomplete gamma is a finite exponential sum,
    and L(T_v) = (beta / c)^{2 alpha} (e^{-rho T_v} - e^{-beta T_v} Σ_{m<2 alpha} (c T_v)^m / m!)
    with c = beta - rho. The sums cancel heavily when c is small, so they are
    evaluated with mpmath at a working precision that grows with
    2 alpha · log10(beta / |c|).

    Raises:
        DomainError: If alpha is not a positive integer.
        SingularityError: If |beta - rho| / beta <= 1e-6.
    """
    a = _integer_shape(model.gamma.alpha)
    b, rho = model.gamma.beta, model.rho
    if abs(b - rho) / b <= SINGULAR_GAP:
        raise SingularityError(
            f"beta={b} and rho={rho} are too close for the integer-shape form; use aoi_violation_quadrature"
        )
    t = model.slack(v)
    if t == 0:
        return 1.0

    shape2 = 2 * a
    c = b - rho
    digits = 40 + math.ceil(shape2 * abs(math.log10(b / abs(c)))) + math.ceil(shape2 * math.log10(1.0 + abs(c) * t))
    with mpmath.workdps(digits):
        mt, mb, mr, mc = (mpmath.mpf(x) for x in (t, b, rho, c))
        x = mb * mt

        def p_int(m: int) -> mpmath.mpf:
            return 1 - mpmath.exp(-x) * mpmath.fsum(x**j / mpmath.factorial(j) for j in range(m))

        head = mpmath.fsum((mc * mt) ** m / mpmath.factorial(m) for m in range(shape2))
        discount = (mb / mc) ** shape2 * (mpmath.exp(-mr * mt) - mpmath.exp(-mb * mt) * head)
        p_2a = p_int(shape2)
        j = (
            mt * (p_int(a) - p_2a)
            - (mpmath.mpf(a) / mb) * p_int(a + 1)
            + (mpmath.mpf(shape2) / mb) * p_int(shape2 + 1)
            + (p_2a - discount) / mr
        )
        mean = mpmath.mpf(a) / mb + 1 / mr
        raw = float(1 - j / mean)
    return _clamp(raw, "AoI violation probability (integer shape)")


def aoi_violation_bounds(model: AoiModel, v: float | TargetAoi) -> tuple[float, float]:
    """Integer-shape bounds (floor(alpha), ceil(alpha)) around the exact value.

    Raises:
        DomainError: If floor(alpha) is 0.
    """
    lo_shape = math.floor(model.gamma.alpha)
    hi_shape = math.ceil(model.gamma.alpha)
    if lo_shape < 1:
        raise DomainError(f"floor(alpha) must be at least 1, got alpha={model.gamma.alpha}")

    def at(shape: int) -> float:
        gamma = GammaParams(alpha=float(shape), beta=model.gamma.beta)
        return aoi_violation_integer(model.model_copy(update={"gamma": gamma}), v)

    lower = at(lo_shape)
    upper = lower if hi_shape == lo_shape else at(hi_shape)
    return lower, upper


def effective_interval_cdf(model: AoiModel, s: float, ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """CDF of the effective inter-generation time X + T_int at ``s``.

    P[X + T_int <= s] = P(alpha, beta s) - e^{-rho s} (beta s)^alpha / Γ(alpha + 1)
    · ₁F₁(alpha; alpha + 1; (rho - beta) s).
    """
    if s <= 0:
        return 0.0
    a, b, rho = model.gamma.alpha, model.gamma.beta, model.rho
    p, _ = regularized_gamma(a, b * s)
    hyper = kummer_1f1(a, a + 1.0, (rho - b) * s, ctl)
    tail = math.exp(-rho * s + a * math.log(b * s) - ln_gamma(a + 1.0) + math.log(hyper))
    return min(1.0, max(0.0, p - tail))


def _evaluate(
    series,
    fallback,
    model: AoiModel,
    v: float | TargetAoi,
    ctl: SeriesControl,
) -> ViolationResult:
    t = model.slack(v)
    if t == 0:
        return ViolationResult(value=1.0, raw=1.0, method="series")
    note: str | None = None
    try:
        raw = series(model, t, ctl)
    except ConvergenceError as exc:
        note = f"series fallback: {exc}"
    else:
        if -CLAMP_SLACK <= raw <= 1.0 + CLAMP_SLACK:
            value = min(1.0, max(0.0, raw))
            return ViolationResult(value=value, raw=raw, method="series", clamped=value != raw)
        note = f"series fallback: raw value {raw:.3e} outside [0, 1]"
    logger.info("falling back to quadrature at v=%s: %s", v, note)
    value = fallback(model, v)
    return ViolationResult(value=value, raw=value, method="quadrature", note=note)


def _paoi_raw(model: AoiModel, t: float, ctl: SeriesControl) -> float:
    a, b = model.gamma.alpha, model.gamma.beta
    return regularized_gamma(2.0 * a, b * t)[1] + _discount(2.0 * a, b, model.rho, t, ctl, _PAOI_HINT)


def evaluate_aoi_violation(
    model: AoiModel,
    v: float | TargetAoi,
    ctl: SeriesControl = DEFAULT_CONTROL,
) -> ViolationResult:
    """AoI violation probability with automatic fallback to quadrature."""
    return _evaluate(_aoi_violation_raw, aoi_violation_quadrature, model, v, ctl)


def evaluate_paoi_violation(
    model: AoiModel,
    v: float | TargetAoi,
    ctl: SeriesControl = DEFAULT_CONTROL,
) -> ViolationResult:
    """PAoI violation probability with automatic fallback to quadrature."""
    return _evaluate(_paoi_raw, paoi_violation_quadrature, model, v, ctl)
