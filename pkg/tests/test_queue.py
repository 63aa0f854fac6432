import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbta.queue import (
    QueueState,
    delay,
    delay_with_capacity_drop,
    exact_delay,
    fifo_check,
    qbtd_travel_time,
    queue_update,
    travel_time_derivative,
)

from conftest import S
from oracles import event_stepped_delay

DT30 = 30 * S


def test_queue_update_examples():
    assert queue_update(0, 3000, 3000, 0.25) == 0
    assert queue_update(0, 4000, 3000, 1 / 120) == pytest.approx(8.3333333, rel=1e-6)
    assert queue_update(5, 1000, 3000, 1 / 120) == 0
    with pytest.raises(ValueError):
        queue_update(0, 1, 0, 1)


def test_delay_examples():
    assert delay(0, 3000) == 0
    assert delay(50, 3000) * 3600 == pytest.approx(60)
    assert delay(25 / 3, 3000) * 3600 == pytest.approx(10)


def test_qbtd_travel_time_examples():
    tf = 90 * S
    assert qbtd_travel_time(tf, 0, 2000, 3000, DT30) * 3600 == pytest.approx(90)
    assert qbtd_travel_time(tf, 0, 4000, 3000, DT30) * 3600 == pytest.approx(100)
    assert qbtd_travel_time(tf, 50, 3000, 3000, DT30) * 3600 == pytest.approx(150)


def test_delay_with_capacity_drop_examples():
    window = (0.0, 100 * S)
    assert delay_with_capacity_drop(0, 0, window, 50, 3000, 1000) * 3600 == pytest.approx(126.6667, abs=1e-3)
    assert delay_with_capacity_drop(0, 0, window, 20, 3000, 1000) * 3600 == pytest.approx(72)
    # arrival at the window end reduces to the plain delay
    assert delay_with_capacity_drop(100 * S, 0, window, 50, 3000, 1000) == pytest.approx(delay(50, 3000))
    with pytest.raises(ValueError):
        delay_with_capacity_drop(200 * S, 0, window, 50, 3000, 1000)


@pytest.mark.parametrize("q", [5.0, 20.0, 27.0, 50.0, 120.0])
def test_capacity_drop_delay_matches_event_stepping(q):
    # queue discharges at 1000 veh/hr until the window ends at 100 s, then 3000
    t_e = 100 * S
    rate = lambda s: 1000.0 if s < t_e else 3000.0
    oracle = event_stepped_delay(q, 0.0, rate, tick=1e-3 * S)
    assert delay_with_capacity_drop(0, 0, (0, t_e), q, 3000, 1000) == pytest.approx(oracle, abs=2e-3 * S)
    assert exact_delay(q, 0.0, [1000.0] * 1 + [3000.0], t_e) == pytest.approx(oracle, abs=2e-3 * S)


@given(st.floats(0, 500), st.floats(0, 1), st.floats(100, 5000))
def test_no_reduction_equals_plain_delay(q, frac, mu):
    window = (0.0, 0.05)
    t = frac * 0.05
    assert delay_with_capacity_drop(t, 0, window, q, mu, mu) == pytest.approx(delay(q, mu), rel=1e-12, abs=1e-15)


def test_derivative_examples():
    assert travel_time_derivative(4000, 3000, 1 / 120) == pytest.approx(2.7778e-6, rel=1e-4)
    assert travel_time_derivative(1000, 3000, 1 / 120) == 0
    assert travel_time_derivative(3000, 3000, 1 / 120) == 0
    # a draining queue still slopes the step travel time
    assert travel_time_derivative(2900, 3000, 1 / 120, q_prev=5) == pytest.approx(1 / 120 / 3000)
    assert travel_time_derivative(1000, 3000, 1 / 120, q_prev=5) == 0


@settings(max_examples=300)
@given(st.floats(0, 200), st.floats(10, 8000), st.floats(1.1, 4000), st.floats(1 / 720, 1 / 60))
def test_derivative_matches_finite_difference(q, mu, excess, dt):
    x = mu + excess
    h = 1e-3
    fd = (qbtd_travel_time(0.01, q, x + h, mu, dt) - qbtd_travel_time(0.01, q, x - h, mu, dt)) / (2 * h)
    assert travel_time_derivative(x, mu, dt) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=200)
@given(
    st.lists(st.tuples(st.floats(0, 6000), st.floats(1, 6000)), min_size=1, max_size=40),
    st.floats(1 / 720, 1 / 60),
)
def test_queue_state_invariants(steps, dt):
    s = QueueState.zeros(1)
    manual = 0.0
    for x, mu in steps:
        s.advance(np.array([x]), np.array([mu]), dt)
        manual = max(0.0, manual + (x - mu) * dt)
        assert s.queue[0] >= 0
        assert s.queue[0] == pytest.approx(manual, abs=1e-9)
        assert s.identity_error() <= 1e-6


def test_fifo_simple_profiles():
    dt = 30 * S
    assert fifo_check(90 * S, [2000] * 20, [3000] * 20, dt).ok
    tri = list(np.interp(np.arange(20), [0, 10, 19], [1000, 5000, 1000]))
    rep = fifo_check(90 * S, tri, [3000] * 20, dt)
    assert rep.ok and np.all(np.diff(rep.exit_times) >= -1e-12)


def test_instant_delay_breaks_fifo_when_capacity_recovers():
    # queue built under a reduced rate; Q/mu(now) jumps down when mu recovers
    dt = 30 * S
    inflow = [3000] * 10
    mu = [1000] * 5 + [3000] * 5
    assert not fifo_check(0.0, inflow, mu, dt, delay_model="instant").ok
    assert fifo_check(0.0, inflow, mu, dt, delay_model="exact").ok


def random_profile(rng, M):
    kind = rng.integers(3)
    if kind == 0:
        inflow = rng.uniform(0, 8000, M)
    elif kind == 1:
        inflow = np.where(rng.random(M) < 0.5, 0.0, rng.uniform(4000, 9000, M))
    else:
        inflow = np.repeat(rng.uniform(0, 8000, M // 4 + 1), 4)[:M]
    mu = rng.uniform(200, 4000, M)
    if rng.random() < 0.5:
        mu = np.repeat(rng.choice([500.0, 1500.0, 3000.0], M // 5 + 1), 5)[:M]
    return inflow, mu


def test_fifo_randomized_profiles():
    rng = np.random.default_rng(20240501)
    for _ in range(200):
        M = int(rng.integers(2, 60))
        dt = float(rng.choice([5, 30, 60])) * S
        inflow, mu = random_profile(rng, M)
        tf = float(rng.uniform(0, 300)) * S
        rep = fifo_check(tf, inflow, mu, dt, tol=1e-9)
        assert rep.ok, (rep.first_violation, inflow, mu)
