"""Fluid point-queue link model.

A link is a free-flow section followed by a vertical queue at its exit that
discharges at the (possibly time-varying) rate ``mu``. Rates are constant
within an interval. Units: hours, vehicles, veh/hr.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Capacity floor (veh/hr). A fully closed link is outside the model.
MIN_CAPACITY = 1.0


def _check_mu(mu):
    if mu <= 0:
        raise ValueError(f"discharge rate must be positive, got {mu}")


def queue_update(q_prev: float, inflow: float, mu: float, dt: float) -> float:
    """Queue (veh) at the end of an interval of length ``dt``."""
    _check_mu(mu)
    if q_prev < 0 or dt <= 0:
        raise ValueError("need q_prev >= 0 and dt > 0")
    return max(0.0, q_prev + (inflow - mu) * dt)


def delay(q: float, mu: float) -> float:
    _check_mu(mu)
    if q < 0:
        raise ValueError("queue must be nonnegative")
    return q / mu


def qbtd_travel_time(tf: float, q_prev: float, inflow: float, mu_prev: float, dt: float) -> float:
    """Link travel time for interval m given inflow x(m), Q(m-1) and mu(m-1).

    Equals ``tf + max(0, q_prev + dt*(inflow - mu_prev)) / mu_prev``.
    """
    _check_mu(mu_prev)
    return tf + max(0.0, q_prev + dt * (inflow - mu_prev)) / mu_prev


def travel_time_derivative(inflow: float, mu: float, dt: float, q_prev: float | None = None) -> float:
    """d(travel time)/d(inflow): dt/mu on an oversaturated link, else 0.

    At ``inflow == mu`` the one-sided derivatives disagree; 0 is returned so a
    link sitting exactly at capacity never enters a Newton denominator.
    Given ``q_prev`` the slope of the step travel time itself is returned
    instead: dt/mu whenever the end-of-interval queue is positive, which also
    covers a draining queue with inflow below capacity.
    """
    _check_mu(mu)
    if q_prev is not None:
        return dt / mu if q_prev + dt * (inflow - mu) > 0 else 0.0
    return dt / mu if inflow > mu else 0.0


def delay_with_capacity_drop(
    t_depart: float,
    tf: float,
    window: tuple[float, float],
    q_arrival: float,
    mu: float,
    mu_reduced: float,
    floor: bool = True,
) -> float:
    """Queue delay for a vehicle reaching the link exit inside a reduction window.

    While the bottleneck is present the queue discharges at ``mu_reduced``
    until ``t_e``, then at ``mu``. If the queue would clear before ``t_e`` the
    closed form goes below the true delay; with ``floor`` the result is then
    ``q_arrival / mu_reduced`` (the queue drains entirely at the reduced rate).
    """
    t_s, t_e = window
    arrival = t_depart + tf
    if not (t_s - 1e-12 <= arrival <= t_e + 1e-12):
        raise ValueError("arrival outside the reduction window; use delay()")
    _check_mu(mu_reduced)
    if mu_reduced > mu:
        raise ValueError("reduced rate exceeds base rate")
    remaining = max(0.0, t_e - arrival)
    tail = (q_arrival - remaining * mu_reduced) / mu
    if tail < 0 and floor:
        return q_arrival / mu_reduced
    return remaining + tail


def exact_delay(q: float, t: float, mu_profile, dt: float) -> float:
    """Time to discharge ``q`` vehicles from time ``t`` under a stepwise rate.

    ``mu_profile[i]`` is the rate on [i*dt, (i+1)*dt); the last entry holds
    past the end. This is the horizontal distance between the virtual arrival
    and departure curves, and reduces to q/mu for a constant rate.
    """
    if q <= 0:
        return 0.0
    i = min(int(math.floor(t / dt + 1e-12)), len(mu_profile) - 1)
    clock = t
    left = q
    while True:
        rate = mu_profile[i]
        _check_mu(rate)
        end = (i + 1) * dt if i < len(mu_profile) - 1 else math.inf
        span = end - clock
        if left <= rate * span:
            return clock + left / rate - t
        left -= rate * span
        clock = end
        i += 1


@dataclass
class QueueState:
    """Per-link queue lengths plus cumulative counts (arrays aligned to links)."""

    queue: np.ndarray
    cum_inflow: np.ndarray
    cum_outflow: np.ndarray

    @classmethod
    def zeros(cls, n_links: int) -> "QueueState":
        return cls(np.zeros(n_links), np.zeros(n_links), np.zeros(n_links))

    def copy(self) -> "QueueState":
        return QueueState(self.queue.copy(), self.cum_inflow.copy(), self.cum_outflow.copy())

    def advance(self, inflow: np.ndarray, mu: np.ndarray, dt: float) -> None:
        """Commit one interval: inflow x (veh/hr) against discharge mu (veh/hr)."""
        mu = np.maximum(mu, MIN_CAPACITY)
        arrived = inflow * dt
        served = np.minimum(mu * dt, self.queue + arrived)
        self.cum_inflow += arrived
        self.cum_outflow += served
        self.queue = np.maximum(0.0, self.queue + (inflow - mu) * dt)

    def identity_error(self) -> float:
        """Largest |Q - (inflow - outflow)| over links, in vehicles."""
        return float(np.max(np.abs(self.queue - (self.cum_inflow - self.cum_outflow)), initial=0.0))


@dataclass(frozen=True)
class FifoReport:
    ok: bool
    first_violation: int | None  # boundary index where f decreased
    exit_times: np.ndarray  # f(t) = t + TT(t) at each boundary


def link_queue_profile(inflow, mu, dt: float) -> np.ndarray:
    """Queue at every boundary 0..M for stepwise inflow and capacity."""
    q = np.zeros(len(inflow) + 1)
    for m in range(len(inflow)):
        q[m + 1] = max(0.0, q[m] + (inflow[m] - mu[m]) * dt)
    return q


def _queue_at(q_bounds, inflow, mu, dt, s):
    m = min(int(math.floor(s / dt + 1e-12)), len(inflow) - 1)
    if m < 0:
        return 0.0
    return max(0.0, q_bounds[m] + (inflow[m] - mu[m]) * (s - m * dt))


def fifo_check(tf: float, inflow, mu, dt: float, delay_model: str = "exact", tol: float = 1e-9) -> FifoReport:
    """Check that t + TT(t) never decreases across interval boundaries.

    TT(t) = tf + w(t + tf), with the queue at the exit evaluated on the
    continuous piecewise-linear trajectory (last rates held past the end).
    ``delay_model="exact"`` discharges the queue through the future capacity
    profile; ``"instant"`` uses Q/mu(arrival), which only agrees with the
    exact delay while mu is constant.
    """
    inflow = np.asarray(inflow, dtype=float)
    mu = np.maximum(np.asarray(mu, dtype=float), MIN_CAPACITY)
    if inflow.shape != mu.shape:
        raise ValueError("inflow and capacity profiles must have equal length")
    q_bounds = link_queue_profile(inflow, mu, dt)
    f = np.empty(len(inflow) + 1)
    for m in range(len(inflow) + 1):
        t = m * dt
        s = t + tf
        q = _queue_at(q_bounds, inflow, mu, dt, s)
        if delay_model == "exact":
            w = exact_delay(q, s, mu, dt)
        elif delay_model == "instant":
            k = min(int(math.floor(s / dt + 1e-12)), len(mu) - 1)
            w = q / mu[k]
        else:
            raise ValueError(f"unknown delay model {delay_model!r}")
        f[m] = t + tf + w
    drops = np.nonzero(np.diff(f) < -tol)[0]
    first = int(drops[0]) + 1 if len(drops) else None
    return FifoReport(first is None, first, f)
