from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ledger_freshness.channel import (
    max_rate,
    max_rate_bisection,
    max_rate_closed_form,
    snr_max,
    stp,
    transmission_latency_for,
    tx_latency,
)
from ledger_freshness.config import ChannelInputs
from ledger_freshness.exceptions import BracketError, DomainError, InfiniteLatencyError
from ledger_freshness.models import ChannelParams

DEFAULT = ChannelInputs().to_params()
ZETAS = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def test_default_channel_units() -> None:
    assert DEFAULT.N0 == pytest.approx(1e-13, rel=1e-12)
    assert DEFAULT.lambda_bs == pytest.approx(1e-10, rel=1e-12)
    assert DEFAULT.P == 1.0
    assert DEFAULT.W == 1e6
    assert DEFAULT.l == 37.0
    assert DEFAULT.n == 4.0


def test_stp_zero_rate_is_certain() -> None:
    assert stp(0.0, DEFAULT) == 1.0


def test_stp_rejects_negative_rate() -> None:
    with pytest.raises(DomainError):
        stp(-1.0, DEFAULT)


@given(
    lo=st.floats(min_value=1e3, max_value=1e7),
    factor=st.floats(min_value=1.001, max_value=5.0),
)
@settings(max_examples=100, deadline=None)
def test_stp_strictly_decreasing(lo: float, factor: float) -> None:
    hi = lo * factor
    assert stp(hi, DEFAULT) < stp(lo, DEFAULT)


def test_stp_noise_only_limit() -> None:
    # With a vanishing BS density only the noise term remains.
    params = DEFAULT.model_copy(update={"lambda_bs": 1e-30})
    eps = 1.5e6
    theta = 2 ** (eps / params.W) - 1
    expected = math.exp(-(params.l**4) * params.N0 * params.W * theta / params.P)
    assert stp(eps, params) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("zeta", ZETAS)
def test_max_rate_round_trip(zeta: float) -> None:
    rate = max_rate(DEFAULT, zeta)
    assert abs(stp(rate, DEFAULT) - zeta) <= 1e-9


@pytest.mark.parametrize("zeta", ZETAS)
def test_bisection_matches_closed_form(zeta: float) -> None:
    closed = max_rate_closed_form(DEFAULT, zeta)
    bisected = max_rate_bisection(DEFAULT, zeta)
    assert bisected == pytest.approx(closed, rel=1e-9)


def test_default_rate_and_latency() -> None:
    rate = max_rate(DEFAULT, 0.6)
    assert rate == pytest.approx(1.897e6, rel=1e-3)
    assert tx_latency(5e5, rate) == pytest.approx(0.2636, rel=1e-3)


@pytest.mark.parametrize(
    "zeta, expected",
    [(0.3, 0.0865), (0.5, 0.112), (0.6, 0.1318), (0.8, 0.221), (0.9, 0.388)],
)
def test_transmission_latency_for_quarter_megabit(zeta: float, expected: float) -> None:
    assert transmission_latency_for(DEFAULT, zeta, 2.5e5) == pytest.approx(expected, rel=5e-3)


def test_transmission_latency_grows_with_zeta() -> None:
    latencies = [transmission_latency_for(DEFAULT, z, 5e5) for z in ZETAS]
    assert latencies == sorted(latencies)


def test_zeta_one_gives_zero_rate_and_infinite_latency() -> None:
    assert max_rate(DEFAULT, 1.0) == 0.0
    assert max_rate(DEFAULT, 1.0, method="bisection") == 0.0
    with pytest.raises(InfiniteLatencyError):
        transmission_latency_for(DEFAULT, 1.0, 5e5)


@pytest.mark.parametrize("zeta", [0.0, -0.1, 1.5])
def test_max_rate_rejects_zeta_outside_unit_interval(zeta: float) -> None:
    with pytest.raises(DomainError):
        max_rate(DEFAULT, zeta)


def test_closed_form_requires_pathloss_four() -> None:
    params = DEFAULT.model_copy(update={"n": 3.5})
    with pytest.raises(DomainError):
        max_rate_closed_form(params, 0.6)
    rate = max_rate(params, 0.6)
    assert abs(stp(rate, params) - 0.6) <= 1e-9


def test_bisection_bracket_error_for_unreachable_target() -> None:
    # A target STP below stp(hi) cannot be bracketed.
    hi = DEFAULT.W * math.log2(1.0 + 10.0 * snr_max(DEFAULT))
    floor = stp(hi, DEFAULT)
    assert floor > 0
    with pytest.raises(BracketError):
        max_rate_bisection(DEFAULT, floor / 2.0)


def test_tx_latency_domain() -> None:
    assert tx_latency(5e5, 2.5e6) == pytest.approx(0.2)
    with pytest.raises(DomainError):
        tx_latency(0.0, 1e6)
    with pytest.raises(DomainError):
        tx_latency(5e5, -1.0)
    with pytest.raises(InfiniteLatencyError):
        tx_latency(5e5, 0.0)


def test_channel_params_validation() -> None:
    with pytest.raises(ValueError):
        ChannelParams(P=1.0, N0=1e-13, W=1e6, lambda_bs=1e-10, l=37.0, n=2.0)
