import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import lorentz_matrix

from relwave.spacetime import (
    BoostError,
    BoostParameters,
    FourVector,
    boost,
    boost_events,
    compose_collinear,
    contraction_check,
    gamma,
    interval,
    ordering_delay,
)

coord = st.floats(-1e3, 1e3, allow_nan=False)
betas = st.floats(-0.99, 0.99)
axes = st.tuples(coord, coord, coord).filter(lambda a: np.linalg.norm(a) > 1e-3)


def test_interval_basics():
    a = FourVector(0.0)
    assert interval(a, a) == 0.0
    assert interval(a, FourVector(1.0, 1.0)) == 0.0
    b = FourVector(1.0, 2.0, 3.0, 4.0)
    assert interval(a, b) == interval(b, a) == 4 + 9 + 16 - 1


def test_fourvector_rejects_nonfinite():
    with pytest.raises(ValueError):
        FourVector(float("nan"))
    with pytest.raises(ValueError):
        FourVector(0.0, float("inf"))


def test_boost_triple():
    v = boost(FourVector(0.0, 1.0), BoostParameters(0.6))
    assert v.x == pytest.approx(1.25, abs=1e-12)
    assert v.t == pytest.approx(-0.75, abs=1e-12)
    assert (v.y, v.z) == (0.0, 0.0)


def test_identity_boost():
    v = FourVector(1.5, -2.0, 3.0, 0.25)
    assert boost(v, BoostParameters(0.0)) == v


@pytest.mark.parametrize("beta", [1.0, -1.0, 1.5, 1 - 1e-10])
def test_rejects_superluminal(beta):
    with pytest.raises(BoostError, match=r"\|beta\| < 1"):
        BoostParameters(beta)


def test_rejects_zero_axis():
    with pytest.raises(BoostError):
        BoostParameters(0.3, (0, 0, 0))


def test_gamma():
    assert gamma(0.6) == pytest.approx(1.25)
    assert gamma(0.0) == 1.0


@given(t=coord, x=coord, y=coord, z=coord, beta=betas, axis=axes)
def test_boost_matches_matrix_oracle(t, x, y, z, beta, axis):
    b = BoostParameters(beta, axis)
    ev = np.array([t, x, y, z])
    want = lorentz_matrix(beta, axis) @ ev
    got = boost_events(ev, b)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-9)


@given(t=coord, x=coord, y=coord, z=coord, beta=betas, axis=axes)
def test_inverse_composition(t, x, y, z, beta, axis):
    b = BoostParameters(beta, axis)
    v = FourVector(t, x, y, z)
    back = boost(boost(v, b), b.inverse())
    scale = max(1.0, np.abs(v.as_array()).max())
    assert np.allclose(back.as_array(), v.as_array(), atol=1e-12 * scale * b.gamma ** 2)


def test_perpendicular_components_unchanged():
    b = BoostParameters(0.7, (0, 0, 1))
    v = boost(FourVector(2.0, 3.0, -4.0, 1.0), b)
    assert (v.x, v.y) == (3.0, -4.0)


@given(b1=betas, b2=betas)
def test_velocity_addition(b1, b2):
    ev = np.array([[1.0, 2.0, -0.5, 0.3], [-3.0, 0.1, 2.0, 7.0]])
    two = boost_events(boost_events(ev, BoostParameters(b1)), BoostParameters(b2))
    combined = compose_collinear(BoostParameters(b1), BoostParameters(b2))
    assert combined.beta == pytest.approx((b1 + b2) / (1 + b1 * b2), abs=1e-15)
    g = BoostParameters(b1).gamma * BoostParameters(b2).gamma
    assert np.allclose(boost_events(ev, combined), two, atol=1e-12 * g * 10)


def test_compose_rejects_noncollinear():
    with pytest.raises(BoostError):
        compose_collinear(BoostParameters(0.3), BoostParameters(0.3, (0, 1, 0)))


def test_compose_antiparallel_axes():
    c = compose_collinear(BoostParameters(0.5), BoostParameters(0.5, (-1, 0, 0)))
    assert c.beta == pytest.approx(0.0, abs=1e-15)


def test_ordering_delay_examples():
    assert ordering_delay(3.0, BoostParameters(0.0)) == 0.0
    assert ordering_delay(2.0, BoostParameters(0.5)) == pytest.approx(2 * 0.5 / math.sqrt(0.75), abs=1e-12)
    assert ordering_delay(2.0, BoostParameters(0.5)) == pytest.approx(1.1547005383792515, abs=1e-12)


@given(dx=coord, beta=betas)
def test_ordering_delay_antisymmetric_and_oracle(dx, beta):
    b = BoostParameters(beta)
    assert ordering_delay(dx, b.inverse()) == -ordering_delay(dx, b)
    L = lorentz_matrix(beta)
    t_origin = (L @ [0, 0, 0, 0])[0]
    t_down = (L @ [0, dx, 0, 0])[0]
    assert ordering_delay(dx, b) == pytest.approx(t_origin - t_down, abs=1e-12 * max(1, abs(dx)) * b.gamma)


def test_contraction_examples():
    assert contraction_check(3.0, BoostParameters(0.0)) == (3.0, 0.0)
    assert contraction_check(0.0, BoostParameters(0.6)) == (0.0, 0.0)
    length, desync = contraction_check(1.0, BoostParameters(0.6))
    assert length == pytest.approx(0.8, abs=1e-12)
    assert desync == pytest.approx(0.6, abs=1e-12)


@given(L=st.floats(0, 100), beta=betas)
def test_contraction_oracle(L, beta):
    # ends of a stick at rest in the boosted frame, read at equal unboosted time t = 0
    b = BoostParameters(beta)
    length, desync = contraction_check(L, b)
    ends = boost_events(np.array([[0.0, 0, 0, 0], [0.0, length, 0, 0]]), b)
    assert ends[1, 1] - ends[0, 1] == pytest.approx(L, rel=1e-12, abs=1e-12)
    assert ends[0, 0] - ends[1, 0] == pytest.approx(desync, rel=1e-12, abs=1e-12)


def test_boost_parameters_normalise_axis():
    b = BoostParameters(0.2, (0, 3, 4))
    assert np.allclose(b.axis, (0, 0.6, 0.8))
    assert abs(np.linalg.norm(b.axis) - 1) < 1e-12
