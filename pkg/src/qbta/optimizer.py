"""Candidate ATMA routes ranked by the extra system travel time they cause.

The system cost of a route is TSTT with its capacity-drop schedule minus
TSTT with base capacity everywhere, both from full assignment runs on the
same grid, demand and convergence settings.
"""
from __future__ import annotations

import csv
import itertools
import logging
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .benchmarks import run_model
from .capacity import ATMARoute, base_profile, build_atma_schedule, compile_profile
from .network import Network, ODPair, Path, TimeGrid, iter_shortest_paths, path_free_flow_time
from .solver import ConvergenceParams

log = logging.getLogger(__name__)

# enumeration budget when filtering k-shortest paths for coverage
MAX_ENUMERATED = 5000


@dataclass(frozen=True)
class Scenario:
    """Everything an assignment run needs apart from the capacity profile."""

    network: Network
    demands: tuple[ODPair, ...]
    grid: TimeGrid
    params: ConvergenceParams = ConvergenceParams()
    theta: float | None = None  # None: one lane blocked
    queue_commit: str = "prev"
    demand_scale: float = 1.0
    model: str = "proposed"

    def run(self, route: ATMARoute | None):
        if route is None:
            profile = base_profile(self.network, self.grid)
        else:
            events = build_atma_schedule(route, self.network, self.theta)
            profile = compile_profile(events, self.network, self.grid)
        return run_model(
            self.model, self.network, list(self.demands), profile, self.grid, self.params,
            queue_commit=self.queue_commit,
            demand_scale=None if self.demand_scale == 1.0 else self.demand_scale,
        )


@dataclass(frozen=True)
class RouteEvaluation:
    index: int  # 1-based candidate number
    route: ATMARoute
    tstt: float  # veh-h
    baseline_tstt: float
    free_flow_time: float  # hours, general traffic
    converged_share: float  # intervals with gap <= gap_tol
    mean_gap: float
    mean_corrected_gap: float

    @property
    def system_cost(self) -> float:
        return self.tstt - self.baseline_tstt

    @property
    def system_cost_pct(self) -> float:
        return 100.0 * self.system_cost / self.baseline_tstt if self.baseline_tstt > 0 else 0.0


@dataclass(frozen=True)
class SensitivitySpec:
    demand_multipliers: tuple[float, ...] = ()
    atma_speeds: tuple[float, ...] = ()  # mph

    def __post_init__(self):
        if any(m <= 0 for m in self.demand_multipliers):
            raise ValueError("demand multipliers must be positive")
        if any(v <= 0 for v in self.atma_speeds):
            raise ValueError("ATMA speeds must be positive")

    @property
    def empty(self) -> bool:
        return not self.demand_multipliers and not self.atma_speeds


def enumerate_candidates(
    network: Network,
    origin: int,
    destination: int,
    maintenance_links: Iterable[int] = (),
    k: int = 10,
    require_coverage: bool = False,
    speed: float = 10.0,
    start_time: float = 0.0,
) -> list[ATMARoute]:
    """k shortest free-flow routes, optionally only those using every maintenance link."""
    if k < 1:
        raise ValueError("k must be >= 1")
    need = set(maintenance_links)
    tf = network.free_flow_times
    plain: list[Path] = []
    covering: list[Path] = []
    for path, _ in itertools.islice(iter_shortest_paths(network, tf, origin, destination), MAX_ENUMERATED):
        if len(plain) < k:
            plain.append(path)
        if need <= set(path):
            covering.append(path)
        if len(covering) == k or (not (require_coverage and need) and len(plain) == k):
            break
    chosen = plain
    if require_coverage and need:
        if covering:
            chosen = covering
        else:
            log.warning("no route from %s to %s covers all maintenance links; using plain k-shortest", origin, destination)
    return [ATMARoute(p, start_time, speed) for p in chosen]


def _evaluate(args):
    index, route, scenario, baseline = args
    res = scenario.run(route)
    return RouteEvaluation(
        index=index,
        route=route,
        tstt=res.tstt,
        baseline_tstt=baseline,
        free_flow_time=path_free_flow_time(route.path, scenario.network),
        converged_share=res.converged_share(scenario.params.gap_tol),
        mean_gap=float(np.mean(res.gap)),
        mean_corrected_gap=float(np.mean(res.corrected_gap)),
    )


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))  # map keeps submission order


def baseline_tstt(scenario: Scenario) -> float:
    return scenario.run(None).tstt


def system_cost(route: ATMARoute, baseline: float, scenario: Scenario, index: int = 1) -> RouteEvaluation:
    return _evaluate((index, route, scenario, baseline))


def rank(evaluations: Sequence[RouteEvaluation]) -> list[RouteEvaluation]:
    """Cheapest first; ties by route free-flow time, then link ids."""
    return sorted(evaluations, key=lambda e: (e.system_cost, e.free_flow_time, e.route.path))


def optimize(candidates: Sequence[ATMARoute], scenario: Scenario, jobs: int = 1, baseline: float | None = None):
    """Evaluate every candidate against one shared baseline; return (best, ranked)."""
    if not candidates:
        raise ValueError("no candidate routes")
    if baseline is None:
        baseline = baseline_tstt(scenario)
    evals = _map(_evaluate, [(i + 1, r, scenario, baseline) for i, r in enumerate(candidates)], jobs)
    ranked = rank(evals)
    return ranked[0], ranked


@dataclass(frozen=True)
class SweepPoint:
    param: str  # "demand" or "speed"
    value: float
    baseline_tstt: float
    ranked: list[RouteEvaluation] = field(default_factory=list)


def sensitivity_sweep(spec: SensitivitySpec, candidates: Sequence[ATMARoute], scenario: Scenario, jobs: int = 1):
    """Re-run baseline and every candidate at each sweep point."""
    if spec.empty:
        raise ValueError("nothing to sweep")
    points = [("demand", v, replace(scenario, demand_scale=v), list(candidates)) for v in spec.demand_multipliers]
    points += [
        ("speed", v, scenario, [replace(r, speed=v) for r in candidates]) for v in spec.atma_speeds
    ]
    # baselines first (one per distinct scenario), then all route runs in one batch
    base_keys = []
    for _, _, sc, _ in points:
        if sc not in base_keys:
            base_keys.append(sc)
    base_vals = _map(baseline_tstt, base_keys, jobs)
    baselines = {id(sc): base_vals[base_keys.index(sc)] for _, _, sc, _ in points}
    tasks = []
    for pi, (_, _, sc, routes) in enumerate(points):
        tasks += [(i + 1, r, sc, baselines[id(sc)]) for i, r in enumerate(routes)]
    evals = _map(_evaluate, tasks, jobs)
    out = []
    pos = 0
    for param, value, sc, routes in points:
        chunk = evals[pos: pos + len(routes)]
        pos += len(routes)
        out.append(SweepPoint(param, value, baselines[id(sc)], rank(chunk)))
    return out


def _links(path: Path) -> str:
    return " ".join(str(l) for l in path)


def write_ranking_csv(ranked: Sequence[RouteEvaluation], path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["rank", "candidate", "route_links", "tstt_vehh", "system_cost_vehh", "system_cost_pct", "route_fftt_s"])
        for r, e in enumerate(ranked, 1):
            w.writerow([
                r, e.index, _links(e.route.path), f"{e.tstt:.6f}", f"{e.system_cost:.6f}",
                f"{e.system_cost_pct:.6f}", f"{e.free_flow_time * 3600:.3f}",
            ])


def write_sensitivity_csv(points: Sequence[SweepPoint], path, header_comment: str | None = None) -> None:
    """Long format: one baseline row plus one row per route for each sweep point."""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["sweep_param", "value", "rank", "candidate", "route_links", "tstt_vehh", "system_cost_vehh", "system_cost_pct"])
        for p in points:
            w.writerow([p.param, p.value, 0, "baseline", "", f"{p.baseline_tstt:.6f}", "0", "0"])
            for r, e in enumerate(p.ranked, 1):
                w.writerow([
                    p.param, p.value, r, e.index, _links(e.route.path), f"{e.tstt:.6f}",
                    f"{e.system_cost:.6f}", f"{e.system_cost_pct:.6f}",
                ])
