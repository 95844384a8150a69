from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

from ledger_freshness.aoi import (
    _gamma_pdf_factory,
    aoi_model_for,
    aoi_violation,
    aoi_violation_bounds,
    aoi_violation_integer,
    aoi_violation_quadrature,
    average_aoi,
    effective_interval_cdf,
    evaluate_aoi_violation,
    evaluate_paoi_violation,
    mean_cycle,
    paoi_cdf,
    paoi_violation,
    paoi_violation_quadrature,
)
from ledger_freshness.config import ChannelInputs
from ledger_freshness.exceptions import ConvergenceError, DomainError, SingularityError
from ledger_freshness.latency_model import lookup_params
from ledger_freshness.models import AoiModel, GammaParams, Knob, SeriesControl, TargetAoi, ViolationResult

CHANNEL = ChannelInputs().to_params()
V_GRID = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]


def _model(alpha: float, beta: float, rho: float, t_tx: float = 0.0) -> AoiModel:
    return AoiModel(gamma=GammaParams(alpha=alpha, beta=beta), rho=rho, t_tx=t_tx)


def _default_model() -> AoiModel:
    return aoi_model_for(lookup_params(Knob.TARGET_STP, 0.6).gamma, 15.0, 0.6, CHANNEL, 5e5)


def test_average_aoi_sawtooth_limit() -> None:
    model = _model(1.0, 1e9, 1.0, 0.3)
    assert average_aoi(model) == pytest.approx(1.3, rel=1e-6)


def test_average_aoi_fast_arrival_limit() -> None:
    alpha, beta, t_tx = 5.42, 2.84, 0.26
    model = _model(alpha, beta, 1e9, t_tx)
    expected = (alpha + 1) / (2 * beta) + alpha / beta + t_tx
    assert average_aoi(model) == pytest.approx(expected, rel=1e-6)


def test_average_aoi_bounds_and_monotone_in_t_tx() -> None:
    values = [average_aoi(_model(5.42, 2.84, 9.0, t)) for t in (0.0, 0.1, 0.26, 1.0)]
    assert values == sorted(values)
    assert len(set(values)) == 4
    assert values[0] > 5.42 / 2.84


def test_mean_cycle() -> None:
    assert mean_cycle(_model(5.42, 2.84, 9.0)) == pytest.approx(1 / 9 + 5.42 / 2.84)


def test_aoi_model_for_default_channel() -> None:
    model = _default_model()
    assert model.rho == pytest.approx(9.0)
    assert model.t_tx == pytest.approx(0.2636, rel=1e-3)


@pytest.mark.parametrize("v", [0.0, 0.2, 0.5])
def test_violation_is_one_without_slack(v: float) -> None:
    model = _model(5.55, 2.85, 9.0, 0.5)
    assert aoi_violation(model, v) == 1.0
    assert paoi_violation(model, v) == 1.0
    assert aoi_violation_quadrature(model, v) == 1.0
    assert paoi_violation_quadrature(model, v) == 1.0
    assert aoi_violation_integer(_model(5.0, 2.85, 9.0, 0.5), v) == 1.0


def test_violation_vanishes_for_large_targets() -> None:
    model = _model(5.55, 2.85, 9.0, 0.5)
    assert aoi_violation(model, 200.0) < 1e-12
    assert paoi_violation(model, 200.0) < 1e-12
    assert paoi_cdf(model, 200.0) == pytest.approx(1.0)


def test_target_aoi_argument() -> None:
    model = _model(5.55, 2.85, 9.0, 0.5)
    assert aoi_violation(model, TargetAoi(v=3.0)) == aoi_violation(model, 3.0)
    with pytest.raises(ValueError):
        TargetAoi(v=-1.0)


def test_series_matches_quadrature_reference_point() -> None:
    model = _model(5.55, 2.85, 9.0, 0.5)
    assert aoi_violation(model, 3.0) == pytest.approx(aoi_violation_quadrature(model, 3.0), abs=1e-6)


@pytest.mark.parametrize("alpha", [1.0, 2.74, 5.42, 8.28])
@pytest.mark.parametrize("ratio", [0.3, 1.5, 4.0])
def test_series_and_quadrature_agree_on_consistency_grid(alpha: float, ratio: float) -> None:
    beta = 2.84
    model = _model(alpha, beta, ratio * beta, 0.26)
    for v in (1.0, 3.0, 5.5):
        assert aoi_violation(model, v) == pytest.approx(aoi_violation_quadrature(model, v), abs=1e-6)
        assert paoi_violation(model, v) == pytest.approx(paoi_violation_quadrature(model, v), abs=1e-8)


def test_large_beta_slack_falls_back_to_quadrature() -> None:
    # beta * T_v = 1500 is beyond the default term budget of the series.
    model = _model(1.0, 1e3, 2.0, 0.0)
    result = evaluate_aoi_violation(model, 1.5)
    assert result.method == "quadrature"
    assert result.value == pytest.approx(aoi_violation_integer(model, 1.5), abs=1e-6)


@pytest.mark.parametrize("alpha", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("rho", [3.0, 9.0])
@pytest.mark.parametrize("t_tx", [0.0, 0.5])
def test_integer_form_matches_series(alpha: int, rho: float, t_tx: float) -> None:
    model = _model(float(alpha), 2.85, rho, t_tx)
    for v in V_GRID:
        assert aoi_violation_integer(model, v) == pytest.approx(aoi_violation(model, v), abs=1e-6)


def test_integer_form_matches_quadrature() -> None:
    model = _model(1.0, 2.0, 1.0, 0.0)
    assert aoi_violation_integer(model, 2.0) == pytest.approx(aoi_violation_quadrature(model, 2.0), abs=1e-6)


def test_integer_form_domain() -> None:
    with pytest.raises(DomainError):
        aoi_violation_integer(_model(5.55, 2.85, 9.0), 3.0)
    with pytest.raises(SingularityError):
        aoi_violation_integer(_model(5.0, 2.85, 2.85), 3.0)
    with pytest.raises(SingularityError):
        aoi_violation_integer(_model(5.0, 2.85, 2.85 * (1 + 1e-7)), 3.0)


def test_bounds_collapse_for_integer_alpha() -> None:
    model = _model(5.0, 2.85, 9.0, 0.5)
    lower, upper = aoi_violation_bounds(model, 3.0)
    assert lower == upper == aoi_violation_integer(model, 3.0)


def test_bounds_sandwich_default_channel_configuration() -> None:
    t_tx = aoi_model_for(GammaParams(alpha=5.55, beta=2.85), 15.0, 0.5, CHANNEL, 5e5).t_tx
    model = _model(5.55, 2.85, 7.5, t_tx)
    lowers, exacts, uppers = [], [], []
    for v in V_GRID:
        lower, upper = aoi_violation_bounds(model, v)
        exact = aoi_violation(model, v)
        assert lower <= exact + 1e-9
        assert exact <= upper + 1e-9
        lowers.append(lower)
        exacts.append(exact)
        uppers.append(upper)
    for curve in (lowers, exacts, uppers):
        assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))


@pytest.mark.parametrize("alpha", [2.5, 5.55, 7.2])
def test_bounds_sandwich_over_grid(alpha: float) -> None:
    model = _model(alpha, 2.85, 9.0, 0.26)
    for v in V_GRID:
        lower, upper = aoi_violation_bounds(model, v)
        assert lower <= aoi_violation(model, v) + 1e-9 <= upper + 2e-9


def test_bounds_sandwich_against_quadrature() -> None:
    model = _model(2.5, 1.0, 2.0, 0.2)
    lower, upper = aoi_violation_bounds(model, 3.0)
    oracle = aoi_violation_quadrature(model, 3.0)
    assert lower < oracle < upper


def test_bounds_need_alpha_at_least_one() -> None:
    with pytest.raises(DomainError):
        aoi_violation_bounds(_model(0.5, 2.85, 9.0), 3.0)


def test_violation_probabilities_non_increasing() -> None:
    model = _default_model()
    grid = np.arange(0.0, 12.01, 0.25)
    p_v = [aoi_violation(model, float(v)) for v in grid]
    p_pv = [paoi_violation(model, float(v)) for v in grid]
    for curve in (p_v, p_pv):
        assert all(0.0 <= p <= 1.0 for p in curve)
        assert all(b <= a + 1e-12 for a, b in zip(curve, curve[1:]))


def test_default_configuration_needs_no_clamping() -> None:
    model = _default_model()
    for v in V_GRID:
        result = evaluate_aoi_violation(model, v)
        assert result.method == "series"
        assert not result.clamped
        assert 0.0 < result.raw < 1.0


def test_paoi_matches_direct_monte_carlo() -> None:
    alpha, beta, rho, t_tx = 5.42, 2.84, 9.0, 0.26
    model = _model(alpha, beta, rho, t_tx)
    rng = np.random.default_rng(20190101)
    n_chunks, chunk = 10, 1_000_000
    targets = [2.0, 4.0, 5.5, 8.0]
    hits = np.zeros(len(targets))
    for _ in range(n_chunks):
        total = (
            rng.gamma(alpha, 1 / beta, chunk)
            + rng.gamma(alpha, 1 / beta, chunk)
            + rng.exponential(1 / rho, chunk)
            + t_tx
        )
        hits += [(total >= v).sum() for v in targets]
    n = n_chunks * chunk
    for v, count in zip(targets, hits):
        p_hat = count / n
        se = math.sqrt(max(p_hat * (1 - p_hat), 1.0 / n) / n)
        assert abs(paoi_violation(model, v) - p_hat) <= 3 * se


def test_series_failure_raises_with_quadrature_hint() -> None:
    model = _model(5.42, 2.84, 9.0, 0.26)
    with pytest.raises(ConvergenceError, match="aoi_violation_quadrature"):
        aoi_violation(model, 5.0, SeriesControl(max_terms=4))
    with pytest.raises(ConvergenceError, match="Monte Carlo"):
        paoi_violation(model, 5.0, SeriesControl(max_terms=4))


def test_evaluate_falls_back_to_quadrature() -> None:
    model = _model(5.42, 2.84, 9.0, 0.26)
    result = evaluate_aoi_violation(model, 5.0, SeriesControl(max_terms=4))
    assert result.method == "quadrature"
    assert result.note and "series fallback" in result.note
    assert result.value == pytest.approx(aoi_violation(model, 5.0), abs=1e-6)

    peak = evaluate_paoi_violation(model, 5.0, SeriesControl(max_terms=4))
    assert peak.method == "quadrature"
    assert peak.value == pytest.approx(paoi_violation(model, 5.0), abs=1e-8)


def test_evaluate_series_path_metadata() -> None:
    model = _model(5.42, 2.84, 9.0, 0.26)
    result = evaluate_aoi_violation(model, 3.0)
    assert result.method == "series"
    assert result.note is None
    assert result.value == aoi_violation(model, 3.0)
    assert evaluate_aoi_violation(model, 0.1).value == 1.0


def test_violation_result_methods() -> None:
    assert ViolationResult(value=0.5, raw=0.5, method="quadrature").method == "quadrature"
    with pytest.raises(ValidationError):
        ViolationResult(value=0.5, raw=0.5, method="integer")


def test_gamma_pdf_matches_scipy() -> None:
    pdf = _gamma_pdf_factory(GammaParams(alpha=5.42, beta=2.84))
    for x in (0.0, 0.3, 1.9, 7.5):
        assert pdf(x) == pytest.approx(stats.gamma.pdf(x, 5.42, scale=1 / 2.84), rel=1e-10, abs=1e-300)
    assert _gamma_pdf_factory(GammaParams(alpha=1.0, beta=3.0))(0.0) == 3.0


def test_evaluate_near_equal_rates() -> None:
    model = _model(5.42, 2.84, 2.84, 0.26)
    for v in (2.0, 4.0, 6.0):
        result = evaluate_aoi_violation(model, v)
        assert result.value == pytest.approx(aoi_violation_quadrature(model, v), abs=1e-6)


def test_channel_limit_forces_certain_violation() -> None:
    gamma = lookup_params(Knob.TARGET_STP, 0.9).gamma
    model = aoi_model_for(gamma, 15.0, 0.9, CHANNEL, 5e5)
    assert model.t_tx > 0.5
    assert aoi_violation(model, 0.5) == 1.0


def test_rows_cross_between_small_and_large_targets() -> None:
    low = lookup_params(Knob.TARGET_STP, 0.4)
    high = lookup_params(Knob.TARGET_STP, 0.8)
    m_low = aoi_model_for(low.gamma, 15.0, 0.4, CHANNEL, 5e5)
    m_high = aoi_model_for(high.gamma, 15.0, 0.8, CHANNEL, 5e5)
    assert aoi_violation(m_low, 0.4) < aoi_violation(m_high, 0.4)
    assert aoi_violation(m_low, 5.0) > aoi_violation(m_high, 5.0)


@pytest.mark.parametrize("rho", [1.0, 2.84, 9.0])
def test_effective_interval_cdf_matches_convolution(rho: float) -> None:
    gamma = GammaParams(alpha=5.42, beta=2.84)
    model = AoiModel(gamma=gamma, rho=rho)
    dist = stats.gamma(a=gamma.alpha, scale=1 / gamma.beta)
    for s in (0.5, 1.0, 2.0, 4.0, 8.0):
        expected, _ = integrate.quad(lambda x: dist.pdf(x) * -math.expm1(-rho * (s - x)), 0.0, s, epsabs=1e-13)
        assert effective_interval_cdf(model, s) == pytest.approx(expected, abs=1e-9)
    assert effective_interval_cdf(model, 0.0) == 0.0
