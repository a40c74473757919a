import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2xlab.emissions import EmissionCoeffs, co2_rate, integrate_emissions

DEFAULT = EmissionCoeffs()


def _poly(v, a, c):
    return c.c0 + c.c1 * v + c.c2 * v**2 + c.c3 * v**3 + c.c4 * max(0.0, a) * v


def test_idle_rate_is_c0():
    assert co2_rate(0.0, 0.0, DEFAULT) == DEFAULT.c0


def test_default_cruise_example():
    assert co2_rate(10.0, 0.0, DEFAULT) == pytest.approx(3.0)


def test_negative_polynomial_clamped():
    c = EmissionCoeffs(c0=0.1, c1=-5.0, c2=0.0, c3=0.0, c4=0.0)
    assert co2_rate(10.0, 0.0, c) == 0.0


def test_braking_has_no_traction_term():
    assert co2_rate(10.0, -3.0, DEFAULT) == co2_rate(10.0, 0.0, DEFAULT)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        co2_rate(-1.0, 0.0, DEFAULT)
    with pytest.raises(ValueError):
        EmissionCoeffs(c0=0.0)
    with pytest.raises(ValueError):
        integrate_emissions([], DEFAULT, 0.0)


@given(st.floats(0, 60), st.floats(-10, 10))
def test_rate_matches_polynomial_and_is_nonnegative(v, a):
    r = co2_rate(v, a, DEFAULT)
    assert r >= 0
    assert r == pytest.approx(max(0.0, _poly(v, a, DEFAULT)))


def test_integration_linearity_and_empty():
    assert integrate_emissions([], DEFAULT, 1.0) == 0.0
    assert integrate_emissions([(10.0, 0.0)] * 50, DEFAULT, 0.5) == pytest.approx(3.0 * 25)


def test_stop_and_go_emits_more_than_cruise():
    # cruise: 10 m/s for 40 s = 400 m
    cruise = [(10.0, 0.0)] * 40
    # stop and go: ramp 0 -> 10 -> 0 at 2.5 m/s^2 (dt=1), speeds sampled at step end
    cycle = [(2.5, 2.5), (5.0, 2.5), (7.5, 2.5), (10.0, 2.5),
             (7.5, -2.5), (5.0, -2.5), (2.5, -2.5), (0.0, -2.5)]
    dist_per_cycle = sum(v for v, _ in cycle)
    go = cycle * int(400 // dist_per_cycle)
    assert sum(v for v, _ in go) == pytest.approx(400.0)
    assert integrate_emissions(go, DEFAULT, 1.0) > integrate_emissions(cruise, DEFAULT, 1.0)


@given(st.lists(st.tuples(st.floats(0.5, 30), st.floats(-3, 3)), min_size=1, max_size=30),
       st.integers(1, 20))
def test_idle_time_adds_emissions(traj, idle_steps):
    with_idle = traj + [(0.0, 0.0)] * idle_steps
    assert integrate_emissions(with_idle, DEFAULT, 1.0) > integrate_emissions(traj, DEFAULT, 1.0)


def test_from_dict_keeps_unit():
    c = EmissionCoeffs.from_dict({"c0": 2.0, "unit": "g"})
    assert (c.c0, c.unit, c.c1) == (2.0, "g", DEFAULT.c1)
