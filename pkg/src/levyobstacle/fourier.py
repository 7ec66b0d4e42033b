"""European prices from the characteristic exponent (Lewis-type contour integral).

With ``S_T = e^{x + X_T}`` and ``E[e^{iξX_T}] = e^{Tψ(ξ)}``, integrating along
``Im ξ = -1/2`` gives

    C = S - sqrt(S K) e^{-rT} / π ∫_0^∞ Re[e^{iu ln(S/K)} e^{Tψ(u - i/2)}] / (u² + 1/4) du

and the put follows from put-call parity, which holds once ``ψ(-i) = r``.
"""
import math

import numpy as np
from scipy import integrate

from .levy_models import exponent_function

__all__ = ["european_call", "european_put", "european_put_curve"]


def _lewis_integral(psi, T, k, limit=2000):
    def integrand(u):
        z = np.exp(1j * u * k + T * psi(u - 0.5j))
        return float(np.real(z)) / (u * u + 0.25)
    val, err = integrate.quad(integrand, 0.0, math.inf, limit=limit, epsabs=1e-13, epsrel=1e-11)
    return val, err


def european_call(model, drift_b, r, T, x, K):
    """Call price at log-spot ``x``; ``drift_b`` should satisfy the martingale condition."""
    psi = exponent_function(model, drift_b)
    S = math.exp(x)
    val, _ = _lewis_integral(psi, T, x - math.log(K))
    return S - math.sqrt(S * K) * math.exp(-r * T) / math.pi * val


def european_put(model, drift_b, r, T, x, K):
    """Put price at log-spot ``x`` by parity: ``P = C - S + K e^{-rT}``."""
    return european_call(model, drift_b, r, T, x, K) - math.exp(x) + K * math.exp(-r * T)


def european_put_curve(model, drift_b, r, T, xs, K):
    return np.array([european_put(model, drift_b, r, T, float(x), K) for x in np.atleast_1d(xs)])
