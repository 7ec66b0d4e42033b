import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from levyobstacle import (IntegrabilityError, ParameterDomainError, calibrate_drift, cgmy,
                          characteristic_exponent, empty_measure, levy_density, tabulated,
                          variance_gamma, verify_assumptions)
from levyobstacle.levy_models import (VarianceGammaParams, exponent_function, truncated_moments,
                                      vg_decay_rates, vg_exponent_closed)

NU, SIGMA, THETA = 0.1, 0.2, -0.14


def vg_density_oracle(y, nu=NU, sigma=SIGMA, theta=THETA):
    # textbook form, independent of the package's decay-length parametrisation
    a = theta / sigma ** 2
    c = math.sqrt(2.0 / nu + theta ** 2 / sigma ** 2) / sigma
    return math.exp(a * y - c * abs(y)) / (nu * abs(y))


def vg_exp_integral_oracle(nu=NU, sigma=SIGMA, theta=THETA):
    """∫(e^y - 1 - y) ν(dy) from the VG moment generating function."""
    return -math.log(1.0 - theta * nu - 0.5 * sigma ** 2 * nu) / nu - theta


def cgmy_exp_integral_oracle(C, G, M, Y):
    return C * special.gamma(-Y) * ((M - 1) ** Y - M ** Y + Y * M ** (Y - 1)
                                    + (G + 1) ** Y - G ** Y - Y * G ** (Y - 1))


def test_vg_drift_matches_mgf_oracle(vg):
    b = calibrate_drift(vg, 0.05)
    assert b == pytest.approx(0.05 - vg_exp_integral_oracle(), abs=1e-11)
    assert b == pytest.approx(0.0292857, abs=1e-7)


def test_cgmy_drift_matches_gamma_oracle(cgmy_model):
    b = calibrate_drift(cgmy_model, 0.05)
    assert b == pytest.approx(0.05 - cgmy_exp_integral_oracle(1, 5, 5, 0.5), abs=1e-10)
    assert b == pytest.approx(-0.0302787, abs=1e-7)


def test_martingale_condition_after_calibration(vg, cgmy_model):
    for model in (vg, cgmy_model):
        b = calibrate_drift(model, 0.05)
        assert abs(characteristic_exponent(model, b, -1j) - 0.05) < 1e-10


def test_density_matches_textbook_form(vg):
    for y in (-2.0, -0.3, -1e-3, 1e-3, 0.05, 1.5):
        assert levy_density(vg, y) == pytest.approx(vg_density_oracle(y), rel=1e-12)


def test_density_rejects_origin(vg):
    with pytest.raises(ParameterDomainError):
        levy_density(vg, 0.0)


def test_truncated_moments_against_direct_quadrature(vg):
    eps = 1e-3
    lam, m, var = truncated_moments(vg, eps)
    f = vg_density_oracle
    lam_ref = integrate.quad(f, eps, 50, limit=400)[0] + integrate.quad(f, -50, -eps, limit=400)[0]
    m_ref = integrate.quad(lambda y: y * f(y), eps, 50, limit=400)[0] \
        + integrate.quad(lambda y: y * f(y), -50, -eps, limit=400)[0]
    var_ref = integrate.quad(lambda y: y * y * f(y), -eps, 0)[0] \
        + integrate.quad(lambda y: y * y * f(y), 0, eps)[0]
    assert lam == pytest.approx(lam_ref, rel=1e-8)
    assert m == pytest.approx(m_ref, rel=1e-8)
    assert var == pytest.approx(var_ref, rel=1e-8)
    assert lam == pytest.approx(64.91, abs=0.01)


def test_cgmy_closed_form_exponent(cgmy_model):
    b = calibrate_drift(cgmy_model, 0.05)
    fn = exponent_function(cgmy_model, b)
    for xi in (0.3, 1.0, 4.0):
        quad = characteristic_exponent(cgmy_model, b, xi)
        assert abs(fn(xi) - quad) < 1e-8 * (1 + abs(quad))


def test_parameter_domains():
    with pytest.raises(ParameterDomainError):
        variance_gamma(0.0, 0.2, 0.0)
    with pytest.raises(ParameterDomainError):
        variance_gamma(0.1, -0.2, 0.0)
    with pytest.raises(ParameterDomainError):
        cgmy(1.0, 5.0, 5.0, 2.0)
    with pytest.raises(ParameterDomainError):
        cgmy(0.0, 5.0, 5.0, 0.5)
    with pytest.raises(ValueError):
        tabulated([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ParameterDomainError):
        calibrate_drift(variance_gamma(0.1, 0.2, 0.0), 0.0)


def test_heavy_right_tail_is_not_calibratable():
    with pytest.raises(IntegrabilityError):
        calibrate_drift(cgmy(1.0, 5.0, 0.5, 0.5), 0.05)


def test_assumption_report(vg):
    rep = verify_assumptions(vg)
    assert rep.all_pass
    assert rep.exp_type[0] <= -1 and rep.exp_type[1] >= 1
    bad = verify_assumptions(cgmy(1.0, 5.0, 0.5, 0.5))
    assert not bad.passes["exp_moment_tail"]
    assert bad.passes["levy_integrability"]
    row = rep.to_csv_row().split(",")
    assert len(row) == len(rep.csv_header().split(","))
    with pytest.raises(ParameterDomainError):
        verify_assumptions(vg, alpha=1.5)


def test_empty_measure_is_pure_drift():
    m = empty_measure()
    assert truncated_moments(m, 1e-3) == (0.0, 0.0, 0.0)
    assert characteristic_exponent(m, 0.2, 1.5) == pytest.approx(0.3j)


def test_tabulated_measure_finite_activity():
    xs = np.array([-1.0, -0.5, 0.5, 1.0])
    m = tabulated(xs, [1.0, 1.0, 2.0, 2.0])
    lam, mean, var = truncated_moments(m, 1e-3)
    assert lam == pytest.approx(0.5 + 1.0, rel=1e-9)
    assert mean == pytest.approx(-0.375 + 0.75, rel=1e-9)
    assert var == 0.0


vg_params = st.tuples(st.floats(0.02, 1.0), st.floats(0.05, 0.5), st.floats(-0.3, 0.3))


@settings(max_examples=25, deadline=None)
@given(vg_params, st.floats(-20, 20))
def test_exponent_structure(p, xi):
    nu, sigma, theta = p
    m = variance_gamma(nu, sigma, theta)
    f = exponent_function(m, 0.01)
    val = f(xi)
    assert val.real <= 1e-12
    assert abs(f(-xi) - np.conj(val)) < 1e-12 * (1 + abs(val))
    assert abs(f(0.0)) < 1e-14


@settings(max_examples=15, deadline=None)
@given(vg_params, st.floats(-6, 6))
def test_quadrature_matches_closed_form(p, xi):
    nu, sigma, theta = p
    m = variance_gamma(nu, sigma, theta)
    q = characteristic_exponent(m, 0.0, xi, cross_check=False)
    ref = vg_exponent_closed(m.params, 0.0, xi)
    assert abs(q - ref) <= 1e-6 * (1 + abs(ref))


@settings(max_examples=50, deadline=None)
@given(vg_params)
def test_decay_rates_roundtrip(p):
    nu, sigma, theta = p
    ep, en = vg_decay_rates(theta, sigma, nu)
    assert ep > 0 and en > 0
    assert ep - en == pytest.approx(theta * nu, abs=1e-12)
    assert ep * en == pytest.approx(0.5 * sigma ** 2 * nu, rel=1e-12)
    back = VarianceGammaParams.from_rates(nu, ep, en)
    assert back.sigma == pytest.approx(sigma, rel=1e-10)
    assert back.theta == pytest.approx(theta, abs=1e-10)
