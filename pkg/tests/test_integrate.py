import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridhj.errors import BracketLost, NonFiniteState, StepUnderflow
from hybridhj.hybrid import GuardSpec
from hybridhj.integrate import (
    Segment,
    StepPolicy,
    bisect_crossing,
    earliest_event,
    hermite,
    integrate,
    integrate_segment,
    locate_event,
)
from hybridhj.phase import DynamicsModel, PhasePoint
from hybridhj.scenarios import billiard, particle


def oscillator():
    return DynamicsModel(1, lambda q, p: 0.5 * p[0] ** 2 + 0.5 * q[0] ** 2,
                         lambda q, p: np.array([q[0]]), lambda q, p: np.array([p[0]]))


def test_billiard_free_flight_is_exact():
    seg = integrate_segment(billiard.model(), PhasePoint([0, 0], [1, 0]), 0.0, 1.0, StepPolicy(h=1e-3))
    assert np.max(np.abs(seg.x[-1] - [1, 0, 1, 0])) <= 1e-12
    assert seg.t1 == 1.0


def test_oscillator_returns_after_one_period():
    seg = integrate_segment(oscillator(), np.array([1.0, 0.0]), 0.0, 2 * np.pi, StepPolicy(h=1e-3))
    assert np.max(np.abs(seg.x[-1] - [1.0, 0.0])) <= 1e-8


def test_nh_particle_matches_closed_form():
    sc = particle.build()
    q0 = np.zeros(3)
    lam = [1.0, 1.0, 1.0]
    seg = integrate_segment(sc.model, np.concatenate([q0, particle.gamma(q0, lam)]), 0.0, 0.5, StepPolicy(h=1e-3))
    # independent closed form: y = t, x = asinh(t), z = sqrt(1 + t^2) - 1
    t = 0.5
    assert np.max(np.abs(seg.x[-1][:3] - [np.arcsinh(t), t, np.sqrt(1 + t * t) - 1])) <= 1e-8


def test_grid_is_fixed_and_ends_at_t_end():
    seg = integrate(lambda x: -x, np.array([1.0]), 0.0, 0.0105, StepPolicy(h=1e-3))
    assert np.allclose(np.diff(seg.t)[:-1], 1e-3, rtol=1e-9)
    assert seg.t1 == 0.0105


def test_adaptive_steps_reach_accuracy():
    seg = integrate_segment(oscillator(), np.array([1.0, 0.0]), 0.0, 2 * np.pi,
                            StepPolicy(h=0.1, adaptive=True, local_tol=1e-12))
    assert np.max(np.abs(seg.x[-1] - [1.0, 0.0])) <= 1e-8
    assert len(seg) < 2 * np.pi / 1e-3


def test_adaptive_step_underflow():
    stiff = lambda x: np.array([x[0] ** 3])  # noqa: E731  blows up at t = 0.5
    with pytest.raises((StepUnderflow, NonFiniteState)):
        integrate(stiff, np.array([1.0]), 0.0, 1.0, StepPolicy(h=0.1, adaptive=True, h_min=1e-6, local_tol=1e-12))


def test_underflow_with_large_h_min():
    with pytest.raises(StepUnderflow):
        integrate(lambda x: np.array([np.sin(x[0] * 1e4)]) * 1e4, np.array([0.1]), 0.0, 1.0,
                  StepPolicy(h=0.1, adaptive=True, h_min=1e-2, local_tol=1e-14))


def test_non_finite_state():
    with pytest.raises(NonFiniteState):
        integrate(lambda x: x * x, np.array([1.0]), 0.0, 2.0, StepPolicy(h=0.1))
    with pytest.raises(NonFiniteState):
        integrate(lambda x: x, np.array([np.nan]), 0.0, 1.0)


def test_requires_forward_interval():
    with pytest.raises(ValueError):
        integrate(lambda x: x, np.array([1.0]), 1.0, 1.0)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.0, 1.0))
def test_hermite_reproduces_cubics(c, s):
    poly = np.polynomial.Polynomial(c)
    d = poly.deriv()
    ta, tb = 0.3, 1.7
    t = ta + s * (tb - ta)
    got = hermite(ta, np.array([poly(ta)]), np.array([d(ta)]), tb, np.array([poly(tb)]), np.array([d(tb)]), t)
    assert abs(got[0] - poly(t)) <= 1e-11 * (1 + sum(abs(x) for x in c))


def test_segment_dense_evaluation_matches_samples():
    seg = integrate_segment(oscillator(), np.array([1.0, 0.0]), 0.0, 1.0, StepPolicy(h=1e-2))
    for t, x in zip(seg.t, seg.x):
        assert np.allclose(seg(t), x, atol=1e-15)
    assert abs(seg(0.505)[0] - np.cos(0.505)) <= 1e-9


def test_single_point_segment():
    seg = Segment([2.0], [[1.0, 2.0]])
    assert np.array_equal(seg(5.0), [1.0, 2.0])


# --- event location ---------------------------------------------------------------------


def outward_wall():
    return GuardSpec(lambda q, p: float(q @ q) - 1.0, "increasing", 0)


def test_locate_event_billiard_wall():
    seg = integrate_segment(billiard.model(), PhasePoint([0, -0.5], [0, 1]), 0.0, 2.0, StepPolicy(h=1e-3))
    t_star = locate_event(seg, outward_wall(), (1.4, 1.6))
    assert abs(t_star - 1.5) <= 1e-10


def test_locate_event_at_bracket_start():
    seg = integrate_segment(billiard.model(), PhasePoint([0, -0.5], [0, 1]), 0.0, 2.0, StepPolicy(h=1e-3))
    assert locate_event(seg, outward_wall(), (1.5, 1.7)) == 1.5


def test_locate_event_lost_bracket():
    seg = integrate_segment(billiard.model(), PhasePoint([0, -0.5], [0, 1]), 0.0, 2.0, StepPolicy(h=1e-3))
    with pytest.raises(BracketLost):
        locate_event(seg, outward_wall(), (0.1, 0.5))


def test_earliest_event_reports_only_first_wall():
    # vertical motion between y = 0 and y = 1 starting at y = 0.3 heading down
    seg = integrate_segment(billiard.model(), PhasePoint([0, 0.3], [0, -1]), 0.0, 2.0, StepPolicy(h=1e-3))
    floor = GuardSpec(lambda q, p: q[1], "decreasing", 0)
    ceiling = GuardSpec(lambda q, p: 1.0 - q[1], "decreasing", 1)
    got = earliest_event(seg, [ceiling, floor], (0.0, 2.0))
    assert got[1] == 0 and abs(got[0] - 0.3) <= 1e-10
    assert earliest_event(seg, [ceiling], (0.0, 0.25)) is None


def test_bisect_crossing_tolerances():
    t = bisect_crossing(lambda s: 0.7 - s, 0.0, 1.0, 1e-12, 1e-14)
    assert abs(t - 0.7) <= 1e-12


@given(st.floats(0.01, 0.99))
def test_bisect_crossing_finds_root(r):
    t = bisect_crossing(lambda s: (r - s) * (2 + s), 0.0, 1.0)
    assert abs(t - r) <= 1e-10
