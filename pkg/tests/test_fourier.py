import math

import numpy as np
import pytest
from scipy.stats import norm

from levyobstacle import calibrate_drift, european_call, european_put, variance_gamma
from levyobstacle.fourier import european_put_curve


def black_scholes_put(S, K, r, sigma, T):
    d1 = (math.log(S / K) + (r + 0.5 * sigma ** 2) * T) / (sigma * math.sqrt(T))
    d2 = d1 - sigma * math.sqrt(T)
    return K * math.exp(-r * T) * norm.cdf(-d2) - S * norm.cdf(-d1)


def test_vg_put_values(vg, vg_b, spots):
    # Lewis contour values, checked against Black-Scholes-limit and MC elsewhere
    got = european_put_curve(vg, vg_b, 0.05, 1.0, spots, 1.0)
    ref = [0.169151, 0.101788, 0.0565318, 0.0297090, 0.0151224]
    assert np.allclose(got, ref, atol=2e-6)


def test_put_call_parity(vg, vg_b):
    for x in (-0.2, 0.0, 0.15):
        c = european_call(vg, vg_b, 0.05, 1.0, x, 1.0)
        p = european_put(vg, vg_b, 0.05, 1.0, x, 1.0)
        assert c - p == pytest.approx(math.exp(x) - math.exp(-0.05), abs=1e-10)


def test_small_nu_approaches_black_scholes():
    # VG with theta = 0 tends to a Gaussian with variance sigma^2 as nu -> 0
    m = variance_gamma(1e-4, 0.2, 0.0)
    b = calibrate_drift(m, 0.05)
    for S in (0.9, 1.0, 1.1):
        got = european_put(m, b, 0.05, 1.0, math.log(S), 1.0)
        assert got == pytest.approx(black_scholes_put(S, 1.0, 0.05, 0.2, 1.0), abs=2e-4)


def test_price_bounds(vg, vg_b):
    for x in np.linspace(-1, 1, 9):
        p = european_put(vg, vg_b, 0.05, 1.0, x, 1.0)
        assert max(math.exp(-0.05) - math.exp(x), 0.0) - 1e-10 <= p <= math.exp(-0.05) + 1e-12
