import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levyobstacle import (ConfigError, DriftSpec, JumpCoefficient, ProblemData, affine_clamped,
                          call, constant, put, table)
from levyobstacle.errors import ParameterDomainError, PreconditionError
from levyobstacle.problem import Field, Payoff, payoff_from_dict


def test_payoff_values():
    x = np.log([0.5, 1.0, 2.0])
    assert np.allclose(put(1.0)(x), [0.5, 0.0, 0.0])
    assert np.allclose(call(1.0)(x), [0.0, 0.0, 1.0])
    assert np.allclose(constant(0.3)(x), 0.3)
    assert np.allclose(affine_clamped(0.1, 2.0, 0.0, 0.5)(np.array([-1.0, 0.1, 1.0])),
                       [0.0, 0.3, 0.5])
    assert np.allclose(table([0, 1], [0, 2])(np.array([-1.0, 0.5, 3.0])), [0, 1, 2])
    with pytest.raises(ConfigError):
        Payoff("digital", ())
    with pytest.raises(ConfigError):
        table([0, 0], [1, 2])


def test_payoff_dict_roundtrip():
    for p in (put(1.1), call(0.9), constant(2.0), affine_clamped(0, 1, -1, 1),
              table([0, 1, 2], [1, 0, 1])):
        assert payoff_from_dict(p.to_dict()) == p


def test_norms():
    assert put(1.2).sup_norm() == 1.2
    assert math.isinf(call(1.0).sup_norm())
    assert call(1.0).sup_norm(hi=0.0) == 0.0
    assert affine_clamped(0, 3, -1, 2).lipschitz() == 3
    assert table([0, 1, 3], [0, 2, 3]).lipschitz() == 2


def test_field_time_factor():
    f = Field(put(1.0), rate=-0.1, t_ref=1.0)
    x = np.array([-0.5])
    assert f(0.25, x)[0] == pytest.approx(put(1.0)(x)[0] * math.exp(-0.1 * 0.75))
    assert f.sup_norm(1.0) == pytest.approx(1.0)


def test_problem_preconditions():
    with pytest.raises(PreconditionError) as exc:
        ProblemData(c=0.0, f=0.0, phi=put(1.0))
    assert exc.value.tag == "discount-floor"
    with pytest.raises(ConfigError):
        ProblemData(c=put(1.0), f=0.0, phi=put(1.0))
    p = ProblemData(c=Field(put(1.0), offset=0.01), f=0.0, phi=put(1.0), c0=0.02)
    with pytest.raises(PreconditionError):
        p.check(np.linspace(-1, 1, 11))
    q = ProblemData(c=0.05, f=0.0, phi=put(1.2), g=put(1.0))
    with pytest.raises(PreconditionError) as exc:
        q.check(np.linspace(-1, 1, 11))
    assert exc.value.tag == "terminal-compatibility"
    assert "x =" in str(exc.value)


def test_terminal_defaults_to_obstacle():
    p = ProblemData(c=0.05, f=0.0, phi=put(1.0), T=2.0)
    x = np.array([-0.3, 0.2])
    assert np.array_equal(p.terminal(x), put(1.0)(x))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.0, 1.0), st.floats(0.0, 2.0), st.floats(0.0, 1.0))
def test_discount_shift_data(c, lam, t, fval):
    T = 2.0
    p = ProblemData(c=c, f=fval, phi=put(1.0), g=put(1.0), T=T)
    s = p.discount_shifted(lam)
    x = np.array([-0.4, 0.0, 0.3])
    assert np.allclose(s.c(t, x), c + lam)
    assert s.c0 == pytest.approx(c + lam)
    k = math.exp(-lam * (T - t))
    assert np.allclose(s.f(t, x), k * fval)
    assert np.allclose(s.phi(t, x), k * put(1.0)(x))
    assert np.array_equal(s.phi(T, x), p.phi(T, x))


def test_drift_families():
    d = DriftSpec.tanh(0.1, 0.5, 0.0, 2.0)
    assert d(np.array([0.0]))[0] == pytest.approx(0.1)
    assert d.sup_bound == pytest.approx(1.1)
    assert d.spot_check() == (True, True)
    c = DriftSpec.clamped(0.0, 1.0, -1.0, 1.0)
    assert np.allclose(c(np.array([-3.0, 0.5, 3.0])), [1.0, -0.5, -1.0])
    assert c.spot_check() == (True, True)
    assert DriftSpec.affine(0.2, 1.0).spot_check(-5, 5)[0]
    with pytest.raises(ParameterDomainError):
        DriftSpec.tanh(0, 1, 0, 0)
    with pytest.raises(ParameterDomainError):
        DriftSpec.clamped(0, 1, 1, -1)
    bad = DriftSpec.custom(lambda x: 3 * x, lip_beta=1.0, sup_bound=100.0)
    assert bad.spot_check()[0] is False


def test_amplitude_families():
    a = JumpCoefficient.tanh(1.0, 0.5)
    assert a(np.array([0.0]))[0] == 1.0
    assert a.sup_a == 1.5 and a.lip_a == 0.5
    assert JumpCoefficient.constant(2.0).is_constant()
    cu = JumpCoefficient.custom(lambda x: 1 + 0 * x, 0.0, 1.0)
    assert cu(np.zeros(3)).tolist() == [1.0, 1.0, 1.0]
