import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lrmm.dynamics import (
    Dubins3D,
    Dubins4D,
    NonFiniteStateError,
    propagate,
    sample_control,
    step_d3,
    step_d4,
    wrap_angle,
)


def arc(v, w, t):
    """Closed-form position after turning at constant rate w from the origin, heading 0."""
    return v / w * math.sin(w * t), v / w * (1 - math.cos(w * t))


def integrate_arc(dt, system, total=1.0):
    s = np.array([0.0, 0.0, 0.0, 1.0])
    for _ in range(round(total / dt)):
        s = step_d4(s, (math.pi / 2, 0.0), dt=dt, system=system)
    return s


FAST_TURN = Dubins4D(u1_min=-2.0, u1_max=2.0)


def test_straight_line_unit_speed():
    assert np.array_equal(step_d4([0, 0, 0, 1], [0, 0], [0, 0], dt=1.0), [1, 0, 0, 1])


def test_disturbance_adds_linearly():
    out = step_d4([0, 0, 0, 1], [0, 0], [0.5, 0], dt=1.0, system=Dubins4D(d_r=0.5))
    assert np.allclose(out, [1.5, 0, 0, 1], atol=1e-15)


def test_constant_turn_matches_arc():
    s = integrate_arc(1e-3, FAST_TURN)
    x, y = arc(1.0, math.pi / 2, 1.0)
    assert abs(s[0] - x) < 1e-4 and abs(s[1] - y) < 1e-4
    assert s[2] == pytest.approx(math.pi / 2)


def test_rk4_order():
    x, y = arc(1.0, math.pi / 2, 1.0)
    errs = []
    for dt in (0.1, 0.05):
        s = integrate_arc(dt, FAST_TURN)
        errs.append(math.hypot(s[0] - x, s[1] - y))
    assert errs[0] / errs[1] >= 8


def test_step_d3_examples():
    assert np.allclose(step_d3([0, 0, 0], 0.0, dt=2.0), [2, 0, 0])
    assert np.allclose(step_d3([0, 0, math.pi / 2], 0.0, dt=1.0), [0, 1, math.pi / 2], atol=1e-15)


def test_step_d3_constant_turn_arc():
    system = Dubins3D(speed=1.0, r_min=0.5)
    s = np.zeros(3)
    for _ in range(1000):
        s = step_d3(s, 1.5, dt=1e-3, system=system)
    x, y = arc(1.0, 1.5, 1.0)
    assert abs(s[0] - x) < 1e-4 and abs(s[1] - y) < 1e-4


def test_step_d3_rejects_turn_beyond_min_radius():
    with pytest.raises(ValueError):
        step_d3([0, 0, 0], 4.5, system=Dubins3D(r_min=0.25))


def test_non_finite_state_rejected():
    with pytest.raises(NonFiniteStateError):
        step_d4([np.nan, 0, 0, 1], [0, 0])
    with pytest.raises(NonFiniteStateError):
        step_d3([0, np.inf, 0], 0.0)


def test_out_of_bounds_control_and_disturbance_rejected():
    with pytest.raises(ValueError):
        step_d4([0, 0, 0, 1], [0.6, 0])
    with pytest.raises(ValueError):
        step_d4([0, 0, 0, 1], [0, 0], [0.2, 0], system=Dubins4D(d_r=0.1))


def test_propagate_sample_count():
    traj = propagate(Dubins4D(dt=0.1), [0, 0, 0, 1], [0.1, 0.1], duration=2.0)
    assert len(traj) == 21
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(2.0)
    assert np.all(np.diff(traj.times) > 0)


def test_propagate_is_composition_of_steps():
    system = Dubins4D(dt=0.1)
    traj = propagate(system, [1, 2, 0.3, 1.2], [0, 0], duration=2.0)
    s = np.array([1, 2, 0.3, 1.2])
    for _ in range(20):
        s = step_d4(s, [0, 0], [0, 0], dt=0.1, system=system)
    assert np.array_equal(traj.final_state, s)


def test_propagate_rejects_non_multiple_duration():
    with pytest.raises(ValueError):
        propagate(Dubins4D(dt=0.1), [0, 0, 0, 1], [0, 0], duration=0.25)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(0, 2**32 - 1))
def test_disturbance_interval_bound(u1, u2, seed):
    # position does not feed back into the dynamics, so the disturbance shift
    # is exactly the integral of d: |shift| <= duration * d_r per axis
    system = Dubins4D(d_r=0.1)
    s0 = [0.0, 0.0, 0.4, 1.0]
    nominal = propagate(system, s0, [u1, u2], 2.0).final_state
    disturbed = propagate(system, s0, [u1, u2], 2.0, np.random.default_rng(seed)).final_state
    assert np.all(np.abs(disturbed[:2] - nominal[:2]) <= 2.0 * 0.1 + 1e-9)
    assert np.allclose(disturbed[2:], nominal[2:])


def test_propagate_deterministic():
    system = Dubins4D(d_r=0.1)
    a = propagate(system, [0, 0, 0, 1], [0.2, -0.1], 2.0, np.random.default_rng(5))
    b = propagate(system, [0, 0, 0, 1], [0.2, -0.1], 2.0, np.random.default_rng(5))
    assert np.array_equal(a.states, b.states)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-10, 10), st.floats(-10, 10), st.floats(-20, 20), st.floats(0, 2),
    st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
)
def test_speed_clamp_and_heading_wrap(x, y, th, v, u1, u2):
    traj = propagate(Dubins4D(), [x, y, th, v], [u1, u2], 2.0)
    assert np.all((traj.states[:, 3] >= 0) & (traj.states[:, 3] <= 2))
    assert np.all((traj.states[:, 2] >= -math.pi) & (traj.states[:, 2] < math.pi))


@given(st.floats(-1e6, 1e6))
def test_wrap_angle_range(th):
    w = float(wrap_angle(th))
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(th), abs_tol=1e-6)


def test_sample_control_degenerate_bounds():
    rng = np.random.default_rng(0)
    assert np.array_equal(sample_control([0.3, -0.2], [0.3, -0.2], rng), [0.3, -0.2])


def test_sample_control_uniform_statistics():
    rng = np.random.default_rng(1)
    draws = sample_control([-1.0], [1.0], rng, size=100_000)[:, 0]
    assert abs(draws.mean()) < 0.02
    assert stats.kstest(draws, stats.uniform(loc=-1, scale=2).cdf).statistic < 0.01


def test_sample_control_rejects_unordered_bounds():
    with pytest.raises(ValueError):
        sample_control([1.0], [0.0], np.random.default_rng(0))
