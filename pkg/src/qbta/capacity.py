"""Capacity-drop schedules produced by a slow maintenance vehicle pair.

An ATMA route is traversed at ``speed`` mph; while it occupies a link the
link's discharge rate drops to ``mu0 * (1 - theta)``.
"""
from __future__ import annotations

import csv
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .network import Network, Path, TimeGrid
from .queue import MIN_CAPACITY

MPS_TO_MPH = 3600.0 / 1609.344


@dataclass(frozen=True)
class ATMARoute:
    path: Path
    start_time: float = 0.0  # hours
    speed: float = 10.0  # mph

    def validate(self, network: Network) -> None:
        network.validate_path(self.path)
        if self.speed <= 0:
            raise ValueError("ATMA speed must be positive")
        for lid in self.path:
            if self.speed > network.link(lid).free_speed:
                raise ValueError(f"ATMA speed exceeds free speed on link {lid}")


@dataclass(frozen=True)
class CapacityReductionEvent:
    link_id: int
    t_start: float  # hours
    t_end: float  # hours
    theta: float | None = None  # None -> use the compile-time default

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"empty window on link {self.link_id}")
        if self.theta is not None and not 0.0 <= self.theta < 1.0:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")


def default_theta(network: Network, link_id: int) -> float:
    """One blocked lane."""
    return 1.0 / network.link(link_id).lanes


def build_atma_schedule(
    route: ATMARoute,
    network: Network,
    theta: float | Mapping[int, float] | None = None,
) -> list[CapacityReductionEvent]:
    """Back-to-back occupancy windows along the route.

    ``theta`` may be a global fraction, a per-link mapping (missing links fall
    back to one-lane blockage) or None for one-lane blockage everywhere.
    """
    route.validate(network)
    events = []
    clock = route.start_time
    for lid in route.path:
        duration = network.link(lid).length / route.speed
        if theta is None:
            th = default_theta(network, lid)
        elif isinstance(theta, Mapping):
            th = theta.get(lid, default_theta(network, lid))
        else:
            th = float(theta)
        events.append(CapacityReductionEvent(lid, clock, clock + duration, th))
        clock += duration
    return events


@dataclass(frozen=True)
class CapacityProfile:
    """Discharge rates ``rates[m, i]`` for interval m = 0..M and link index i.

    Row 0 is the initial condition and always holds base capacity.
    """

    rates: np.ndarray
    link_ids: tuple[int, ...]

    @property
    def n_intervals(self) -> int:
        return self.rates.shape[0] - 1

    def discharge_rate(self, link_id: int, m: int) -> float:
        return discharge_rate(self, link_id, m)

    def is_base(self, base: np.ndarray) -> bool:
        return bool(np.all(self.rates == base[None, :]))


def base_profile(network: Network, grid: TimeGrid) -> CapacityProfile:
    rates = np.tile(network.base_capacities, (grid.n_intervals + 1, 1))
    return CapacityProfile(rates, tuple(int(i) for i in network.link_ids))


def compile_profile(
    events,
    network: Network,
    grid: TimeGrid,
    theta_default: float | None = None,
) -> CapacityProfile:
    """Per-interval rates; an interval is reduced when its midpoint is in a window.

    Windows are half-open [t_s, t_e). Overlapping events on a link keep the
    largest reduction.
    """
    if theta_default is not None and not 0.0 <= theta_default < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta_default}")
    M = grid.n_intervals
    base = network.base_capacities
    worst = np.zeros((M + 1, network.n_links))
    mids = (np.arange(1, M + 1) - 0.5) * grid.step
    for ev in events:
        th = ev.theta
        if th is None:
            th = theta_default if theta_default is not None else default_theta(network, ev.link_id)
        inside = (mids >= ev.t_start) & (mids < ev.t_end)
        col = network.index(ev.link_id)
        worst[1:, col] = np.where(inside, np.maximum(worst[1:, col], th), worst[1:, col])
    rates = np.maximum(base[None, :] * (1.0 - worst), MIN_CAPACITY)
    return CapacityProfile(rates, tuple(int(i) for i in network.link_ids))


def discharge_rate(profile: CapacityProfile, link_id: int, m: int) -> float:
    if not 0 <= m <= profile.n_intervals:
        raise IndexError(f"interval {m} outside 0..{profile.n_intervals}")
    return float(profile.rates[m, profile.link_ids.index(link_id)])


def load_events(path) -> list[CapacityReductionEvent]:
    """Read ``link_id,t_start_s,t_end_s,theta`` rows (theta may be blank)."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            th = row.get("theta", "").strip()
            out.append(
                CapacityReductionEvent(
                    int(row["link_id"]),
                    float(row["t_start_s"]) / 3600.0,
                    float(row["t_end_s"]) / 3600.0,
                    float(th) if th else None,
                )
            )
    return out
