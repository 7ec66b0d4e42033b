import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyobstacle import DriftSpec, ProblemData, holder_fit, probe_evolution, probe_stationary, put
from levyobstacle.errors import FitError
from levyobstacle.optimal_stopping import ValueSurface
from levyobstacle.regularity_probe import _center_index, alpha_theory, spatial_pairs


def dyadic(n=20):
    return 2.0 ** -np.arange(n)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 1.4), st.floats(0.01, 10.0))
def test_power_law_recovered(p, C):
    d = dyadic()
    fit = holder_fit(d, C * d ** p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.constant == pytest.approx(C, rel=1e-9)
    assert fit.r2 == pytest.approx(1.0)


def test_exponent_is_capped():
    d = dyadic()
    fit = holder_fit(d, d ** 2)
    assert fit.exponent == 1.5 and fit.raw_slope == pytest.approx(2.0)


def test_noise_floor_and_span_rules():
    d = dyadic()
    with pytest.raises(FitError):
        holder_fit(d, d, noise_floor=1e-2)  # only 7 pairs above the floor
    with pytest.raises(FitError):
        holder_fit(np.linspace(0.5, 1.0, 30), np.linspace(0.5, 1.0, 30))
    d = dyadic(30)
    fit = holder_fit(d, d ** 0.5, window=0.1)
    assert fit.pairs_used == d.size - 4


def test_alpha_theory():
    assert alpha_theory(0.05, 0.2) == 0.25
    assert alpha_theory(0.5, 0.2) == 1.0
    assert alpha_theory(0.05, 0.0) == 1.0


def test_center_index_prefers_contact_edge_near_kink():
    x = np.linspace(-1, 1, 201)
    ex = x < -0.3
    ex[-1] = True  # boundary-row flag at the right edge is ignored
    assert x[_center_index(x, ex, kink_x=0.0)] == pytest.approx(-0.31)
    assert _center_index(x, np.zeros(201, bool), kink_x=0.25) == 125


def test_spatial_pairs_floor_uses_standard_errors():
    x = np.linspace(-1, 1, 401)
    v = np.abs(x) ** 0.5
    se = np.full_like(x, 1e-3)
    d, dv, fl = spatial_pairs(x, v, se, 200)
    assert np.allclose(fl, 3 * math.sqrt(2) * 1e-3 + 1e-11)
    assert np.all(d > 0)


def synthetic_surface(p_x, p_t, T=1.0):
    t = np.linspace(0, T, 513)
    x = np.linspace(-1, 1, 2001)
    tau = T - t
    vals = np.abs(x)[None, :] ** p_x + tau[:, None] ** p_t
    ex = np.zeros_like(vals, dtype=bool)
    prob = ProblemData(c=0.05, f=0.0, phi=put(1.0), g=put(1.0), T=T)
    return ValueSurface(t, x, vals, np.zeros_like(vals), ex, {}, prob)


def test_evolution_probe_on_synthetic_surface():
    rep = probe_evolution(synthetic_surface(1.0, 0.5))
    assert rep.alpha_hat_x == pytest.approx(1.0, abs=0.05)
    assert rep.alpha_hat_t == pytest.approx(0.5, abs=1e-9)
    assert rep.passed
    low = probe_evolution(synthetic_surface(0.5, 0.3))
    assert low.alpha_hat_t == pytest.approx(0.3, abs=1e-9)
    assert not low.pass_flags["x_lipschitz"] and not low.pass_flags["t_half"]
    assert low.to_text().count("\n") == len(low.as_flat()) - 1
    assert len(low.to_csv_row().split(",")) == len(low.csv_header().split(","))


def test_family_intercepts_do_not_bias_slope():
    h = dyadic(12)
    d = np.concatenate([h, h[2:]])
    dv = np.concatenate([h ** 0.4, 0.3 * h[2:] ** 0.4])
    fam = np.r_[np.zeros(12), np.ones(10)]
    assert holder_fit(d, dv, groups=fam).exponent == pytest.approx(0.4, abs=1e-12)
    assert holder_fit(d, dv).exponent != pytest.approx(0.4, abs=1e-3)


def test_stationary_probe_thresholds():
    s = synthetic_surface(0.3, 1.0)
    s.values, s.std_err, s.exercise = s.values[:1], s.std_err[:1], s.exercise[:1]
    s.grid_t = s.grid_t[:1]
    steep = ProblemData(c=0.05, f=0.0, phi=put(1.0), T=40.0)
    rep = probe_stationary(s, steep, DriftSpec.tanh(0.0, 0.2, 0.0, 0.5))
    assert rep.alpha_theory == 0.25 and rep.passed
    rep2 = probe_stationary(s, steep, DriftSpec.constant(0.0))
    assert not rep2.passed and "x_lipschitz" in rep2.pass_flags


def test_stationary_probe_inconclusive_on_flat_surface():
    s = synthetic_surface(1.0, 1.0)
    s.values = np.ones_like(s.values[:1])
    s.std_err, s.exercise, s.grid_t = s.std_err[:1], s.exercise[:1], s.grid_t[:1]
    rep = probe_stationary(s, s.problem, DriftSpec.constant(0.0))
    assert rep.inconclusive and not rep.passed
