"""Comparison models whose assignment ignores part of the true link behaviour.

Each benchmark equilibrates under a distorted travel-time model, while a
truth queue (true capacities, benchmark flows) is carried alongside. The
corrected gap is the relative gap of the benchmark's path flows under the
truth travel times.
"""
from __future__ import annotations

import csv
import enum
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .capacity import CapacityProfile
from .network import Network, ODPair, TimeGrid
from .queue import QueueState
from .solver import (
    AssignmentResult,
    AssignmentState,
    BPRCost,
    ConvergenceParams,
    IntervalResult,
    QueueCost,
    _collect,
    _commit_rate,
    _demand_matrix,
    aggregate_gap,
    queue_link_times,
    relative_gap,
    run_assignment,
)


class BenchmarkKind(enum.Enum):
    NoCapacityDrop = "benchmark1"  # point queue at base capacity
    BPRWithDrop = "benchmark2"  # static BPR at the reduced capacity


@dataclass(frozen=True)
class BPRParams:
    alpha: float = 0.15
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 1:
            raise ValueError("BPR needs alpha > 0 and beta >= 1")


def bpr_travel_time(x, capacity, tf, params: BPRParams = BPRParams()):
    return tf * (1.0 + params.alpha * (np.asarray(x) / capacity) ** params.beta)


def corrected_relative_gap(path_sets, truth_link_times, demands: Sequence[ODPair], network: Network):
    """Relative gap of the given path flows under truth link times."""
    return relative_gap(path_sets, truth_link_times, demands, network)


def run_benchmark(
    kind: BenchmarkKind,
    network: Network,
    demands: Sequence[ODPair],
    profile: CapacityProfile,
    grid: TimeGrid,
    params: ConvergenceParams = ConvergenceParams(),
    bpr: BPRParams = BPRParams(),
    queue_commit: str = "prev",
    demand_scale=None,
) -> AssignmentResult:
    """Assign under the benchmark model; report truth times, queues and gaps.

    In the result ``od_gap``/``gap`` are the benchmark's own (distorted)
    gaps, ``corrected_*`` the truth ones; flows, queues and travel times are
    the truth state, so TSTT is comparable across models.
    """
    kind = BenchmarkKind(kind)
    M, dt = grid.n_intervals, grid.step
    if profile.n_intervals != M:
        raise ValueError("capacity profile does not match the time grid")
    state = AssignmentState(network, demands, params)
    demand = _demand_matrix(state, M, demand_scale)
    base = network.base_capacities
    truth = QueueState.zeros(network.n_links)
    rows = []
    for m in range(1, M + 1):
        mu_prev, mu_curr = profile.rates[m - 1], profile.rates[m]
        d = demand[m - 1]
        if kind is BenchmarkKind.NoCapacityDrop:
            # distorted queue lives in state.queue and never sees the drop
            cost = QueueCost(state.queue.queue.copy(), base, dt)
        else:
            cost = BPRCost(mu_curr, bpr.alpha, bpr.beta)
        info = state.solve(d, cost)
        own_gap = state.gaps(state.tt, d)
        x = state.x.copy()
        if kind is BenchmarkKind.NoCapacityDrop:
            state.queue.advance(x, base, dt)
        tt_true = queue_link_times(state.tf, truth.queue, x, mu_prev, dt)
        corr = state.gaps(tt_true, d)
        truth.advance(x, _commit_rate(queue_commit, mu_prev, mu_curr), dt)
        rows.append(
            IntervalResult(
                m=m,
                flow=x,
                travel_time=tt_true,
                queue=truth.queue.copy(),
                capacity=np.asarray(mu_prev, dtype=float).copy(),
                od_gap=own_gap,
                od_iters=info["od_iters"],
                gap=aggregate_gap(own_gap, d),
                iterations=int(info["od_iters"].max(initial=0)),
                conservation_error=info["conservation_error"],
                min_path_flow=info["min_path_flow"],
                corrected_od_gap=corr,
                corrected_gap=aggregate_gap(corr, d),
                _tf=state.tf,
            )
        )
    return _collect(rows, state, demand, dt, model=kind.value, queue=truth)


MODELS = ("proposed", "benchmark1", "benchmark2")


def run_model(model: str, network, demands, profile, grid, params=ConvergenceParams(), **kw) -> AssignmentResult:
    """Dispatch on a model name; the proposed model's corrected gap is its own."""
    if model == "proposed":
        kw.pop("bpr", None)
        res = run_assignment(network, demands, profile, grid, params, **kw)
        res.corrected_gap = res.gap.copy()
        res.corrected_od_gap = res.od_gap.copy()
        return res
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    return run_benchmark(BenchmarkKind(model), network, demands, profile, grid, params, **kw)


def average_corrected_gap(result: AssignmentResult) -> float:
    return float(np.mean(result.corrected_gap))


def write_summary_csv(rows, path, header_comment: str | None = None) -> None:
    """rows: iterable of (model, path_scenario, avg_corrected_gap)."""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["model", "path_scenario", "avg_corrected_gap"])
        for model, scenario, g in rows:
            w.writerow([model, scenario, f"{g:.9g}"])
