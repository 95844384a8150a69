"""Uplink channel: STP under Poisson interference, maximum target rate, T_tx.

All quantities are SI (W, W/Hz, Hz, m^-2, m). Unit conversion from the
dBm/Hz and per-km^2 forms used in experiment files happens in
:mod:`ledger_freshness.config`.
"""

from __future__ import annotations

import logging
import math
from typing import Literal

from scipy import optimize

from ledger_freshness.exceptions import BracketError, DomainError, InfiniteLatencyError
from ledger_freshness.models import ChannelParams

logger = logging.getLogger(__name__)

RateMethod = Literal["auto", "closed_form", "bisection"]

_BISECT_RTOL = 1e-14
_BISECT_MAXITER = 500


def _theta(epsilon: float, params: ChannelParams) -> float:
    """SINR threshold 2^{ε/W} - 1."""
    return math.expm1(epsilon * math.log(2.0) / params.W)


def snr_max(params: ChannelParams) -> float:
    """Interference-free SNR at the serving base station, P / (N0·W·l^n)."""
    return params.P / (params.N0 * params.W * params.l**params.n)


def stp(epsilon: float, params: ChannelParams) -> float:
    """Successful transmission probability for target rate ``epsilon`` (bit/s).

    Raises:
        DomainError: If epsilon is negative.
    """
    if not (epsilon >= 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be a non-negative rate, got {epsilon!r}")
    if epsilon == 0:
        return 1.0
    n = params.n
    theta = _theta(epsilon, params)
    noise = params.l**n / params.P * params.N0 * params.W * theta
    interference = (
        2.0
        * params.lambda_bs
        * math.pi**2
        * params.l**2
        * theta ** (2.0 / n)
        / (n * params.P ** (2.0 / n) * math.sin(2.0 * math.pi / n))
    )
    return math.exp(-noise - interference)


def _check_zeta(zeta: float) -> None:
    if not (0 < zeta <= 1):
        raise DomainError(f"target STP zeta must lie in (0, 1], got {zeta!r}")


def max_rate_closed_form(params: ChannelParams, zeta: float) -> float:
    """Maximum target rate for pathloss exponent 4, where the STP equation is a quadratic in √θ."""
    _check_zeta(zeta)
    if not math.isclose(params.n, 4.0):
        raise DomainError(f"closed-form rate needs n == 4, got n={params.n}")
    if zeta == 1:
        return 0.0
    noise_power = params.N0 * params.W
    lam = params.lambda_bs
    root = math.sqrt(math.pi**4 * lam**2 - 16.0 * noise_power * math.log(zeta))
    sqrt_theta = math.sqrt(params.P) * (root - math.pi**2 * lam) / (4.0 * noise_power * params.l**2)
    return params.W * math.log2(1.0 + sqrt_theta**2)


def max_rate_bisection(params: ChannelParams, zeta: float) -> float:
    """Maximum target rate by bisection on the strictly decreasing STP.

    Raises:
        DomainError: If zeta is outside (0, 1].
        BracketError: If ``zeta`` is below the STP at the top of the bracket.
    """
    _check_zeta(zeta)
    if zeta == 1:
        return 0.0
    hi = params.W * math.log2(1.0 + 10.0 * snr_max(params))
    if stp(hi, params) >= zeta:
        raise BracketError(
            f"no rate in [0, {hi:.6g}] bit/s reaches STP {zeta}; stp(hi)={stp(hi, params):.3e}"
        )
    rate = optimize.bisect(
        lambda eps: stp(eps, params) - zeta,
        0.0,
        hi,
        xtol=1e-12 * hi,
        rtol=_BISECT_RTOL,
        maxiter=_BISECT_MAXITER,
    )
    return float(rate)


def max_rate(params: ChannelParams, zeta: float, *, method: RateMethod = "auto") -> float:
    """Largest target rate ε̄ whose STP equals ``zeta``.

    ``auto`` uses the closed form when n == 4 and bisection otherwise.
    ``zeta == 1`` returns 0 bit/s.
    """
    if method == "closed_form" or (method == "auto" and math.isclose(params.n, 4.0)):
        return max_rate_closed_form(params, zeta)
    if method in ("auto", "bisection"):
        return max_rate_bisection(params, zeta)
    raise DomainError(f"unknown rate method: {method!r}")


def tx_latency(D: float, rate: float) -> float:
    """Transmission latency D / rate in seconds.

    Raises:
        DomainError: If D is not positive or the rate is negative.
        InfiniteLatencyError: If the rate is zero.
    """
    if not (D > 0 and math.isfinite(D)):
        raise DomainError(f"packet size D must be positive, got {D!r}")
    if rate < 0 or not math.isfinite(rate):
        raise DomainError(f"rate must be a non-negative finite number, got {rate!r}")
    if rate == 0:
        raise InfiniteLatencyError("rate is zero (target STP of 1); transmission latency is infinite")
    return D / rate


def transmission_latency_for(params: ChannelParams, zeta: float, D: float) -> float:
    rate = max_rate(params, zeta)
    t_tx = tx_latency(D, rate)
    logger.debug("zeta=%s rate=%.6g bit/s t_tx=%.6g s", zeta, rate, t_tx)
    return t_tx
