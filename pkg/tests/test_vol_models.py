"""Tests for pricing.vol_models."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from common.constants import TAYLOR_SWITCH, DomainError, ModelKind
from common.tester import run_tests_for_function, test_module
from pricing.vol_models import (
    HestonParams,
    SabrParams,
    conditional_future_variance,
    conditional_mean_variance,
    expected_variance_curve,
    expm1_ratio,
    m0,
    model_from_description,
    one_minus_exp_ratio,
    qv_density_of_M,
)

HESTON = HestonParams(sigma0=20.0, kappa=2.0, theta=400.0, nu=20.0)
SABR = SabrParams(sigma0=20.0, nu=0.5)


def test_parameter_validation():
    assert run_tests_for_function(
        [(20.0, 2.0, 400.0, 20.0, 0.0), (20.0, 0.0, 400.0, 20.0, 0.0), (-1.0, 2.0, 400.0, 20.0, 0.0),
         (20.0, 2.0, 400.0, 20.0, 1.5), (20.0, 2.0, math.inf, 20.0, 0.0)],
        [HESTON, "error", "error", "error", "error"],
        HestonParams,
        "Heston domain",
    )
    assert run_tests_for_function(
        [(20.0, 0.0), (20.0, -0.1), (0.0, 0.5)],
        [SabrParams(20.0, 0.0), "error", "error"],
        SabrParams,
        "SABR domain",
    )


def test_m0_closed_form():
    assert run_tests_for_function(
        [(HESTON, 1.0), (HestonParams(10.0, 2.0, 400.0, 20.0), 1.0), (SABR, 1.0), (SabrParams(20.0, 0.0), 0.8),
         (SABR, 0.0)],
        [400.0, 400.0 - 150.0 * (1.0 - math.exp(-2.0)), 1600.0 * math.expm1(0.25), 400.0, "error"],
        m0,
        "variance swap",
        rel_tol=1e-13,
    )


def test_m0_is_average_of_expected_variance():
    for model in (HestonParams(10.0, 1.5, 300.0, 15.0), SABR):
        for T in (0.3, 1.2):
            integral, _ = quad(lambda t: expected_variance_curve(model, t), 0.0, T)
            assert m0(model, T) == pytest.approx(integral / T, rel=1e-10)


def test_ratio_helpers_are_continuous_at_the_switch():
    for x in (TAYLOR_SWITCH * (1 - 1e-9), TAYLOR_SWITCH * (1 + 1e-9), -TAYLOR_SWITCH * (1 + 1e-9)):
        assert expm1_ratio(x) == pytest.approx(math.expm1(x) / x, rel=1e-10)
        assert one_minus_exp_ratio(x) == pytest.approx(-math.expm1(-x) / x, rel=1e-10)
    assert run_tests_for_function([(0.0,)], [1.0], expm1_ratio, "limit at zero")
    assert isinstance(expm1_ratio(np.array([0.0, 1.0])), np.ndarray)


def test_conditional_future_variance():
    for model in (HESTON, SABR, HestonParams(10.0, 2.0, 400.0, 20.0)):
        T = 1.2
        s0_sq = model.sigma0**2
        assert conditional_future_variance(model, s0_sq, 0.0, T) == pytest.approx(T * m0(model, T), rel=1e-13)
        assert conditional_future_variance(model, 123.0, T, T) == 0.0
        # time-s view: integral of the expected curve restarted at sigma_s^2
        s = 0.5
        shifted = model.__class__(**{**vars(model), "sigma0": math.sqrt(250.0)})
        expected, _ = quad(lambda u: expected_variance_curve(shifted, u), 0.0, T - s)
        assert conditional_future_variance(model, 250.0, s, T) == pytest.approx(expected, rel=1e-10)


def test_conditional_mean_variance_ends_at_realized():
    realized = np.array([300.0, 500.0])
    assert np.allclose(conditional_mean_variance(HESTON, realized, np.array([1.0, 9.0]), 1.0, 1.0), realized)


def _diffusion_sq(model, sigma_sq):
    """Squared diffusion coefficient of sigma^2."""
    if isinstance(model, HestonParams):
        return model.nu**2 * sigma_sq
    return 4.0 * model.nu**2 * sigma_sq**2


def test_qv_density_is_ito_of_conditional_mean():
    T, h = 1.0, 1e-4
    for model in (HESTON, SABR):
        for s, sigma_sq in ((0.0, 400.0), (0.4, 250.0), (0.9, 600.0)):
            slope = (
                conditional_future_variance(model, sigma_sq + h, s, T)
                - conditional_future_variance(model, sigma_sq - h, s, T)
            ) / (2 * h)
            expected = (slope / T) ** 2 * _diffusion_sq(model, sigma_sq)
            assert qv_density_of_M(model, sigma_sq, s, T) == pytest.approx(expected, rel=1e-7)


def test_qv_density_edges():
    assert run_tests_for_function(
        [(HESTON, 400.0, 1.0, 1.0), (SabrParams(20.0, 0.0), 400.0, 0.3, 1.0), (HESTON, 0.0, 0.3, 1.0),
         (HESTON, -1.0, 0.3, 1.0), (HESTON, 400.0, 1.5, 1.0)],
        [0.0, 0.0, 0.0, "error", "error"],
        qv_density_of_M,
        "zero at maturity, zero without vol-of-vol, invalid inputs",
    )


def test_model_description_round_trip():
    for model in (HESTON.with_rho(-0.3), SabrParams(0.7, 0.3, -0.3)):
        text_fields = {key: str(value) for key, value in model.describe().items()}
        assert model_from_description(text_fields) == model
    assert HESTON.kind is ModelKind.HESTON
    with pytest.raises(DomainError):
        model_from_description({"model": "bergomi", "sigma0": 1.0, "nu": 1.0})
    with pytest.raises(DomainError):
        model_from_description({"model": "heston", "sigma0": 1.0, "nu": 1.0})


if __name__ == "__main__":
    test_module(
        "vol_models",
        [
            test_parameter_validation,
            test_m0_closed_form,
            test_m0_is_average_of_expected_variance,
            test_ratio_helpers_are_continuous_at_the_switch,
            test_conditional_future_variance,
            test_conditional_mean_variance_ends_at_realized,
            test_qv_density_is_ito_of_conditional_mean,
            test_qv_density_edges,
            test_model_description_round_trip,
        ],
    )
