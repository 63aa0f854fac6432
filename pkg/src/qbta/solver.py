"""Semi-dynamic user-equilibrium assignment by path-based gradient projection.

Each interval m is a static UE problem whose link times come from the point
queue carried over from interval m-1; once the interval has equilibrated its
flows are pushed through the queue recursion and the next interval starts
from the previous path sets (warm start).
"""
from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .capacity import CapacityProfile
from .network import Network, NetworkError, ODPair, Path, TimeGrid, shortest_path
from .queue import MIN_CAPACITY, QueueState


@dataclass(frozen=True)
class ConvergenceParams:
    gap_tol: float = 1e-4
    max_iters: int = 20
    flow_eps: float = 1e-6  # veh/hr; nonbasic paths at or below this are dropped
    max_paths: int = 64  # per OD pair
    # Newton denominator on queue links: "inflow" gives dt/mu only when x > mu,
    # "queue" whenever the end-of-interval queue is positive
    slope: str = "queue"

    def __post_init__(self):
        if self.slope not in ("inflow", "queue"):
            raise ValueError(f"slope must be 'inflow' or 'queue', got {self.slope!r}")
        if self.gap_tol <= 0:
            raise ValueError("gap_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class QueueCost:
    """Step link times from the point queue: tf + max(0, Q + dt(x - mu))/mu."""

    queue: np.ndarray
    capacity: np.ndarray
    dt: float


@dataclass(frozen=True)
class BPRCost:
    """Static link times tf * (1 + alpha (x/c)^beta)."""

    capacity: np.ndarray
    alpha: float = 0.15
    beta: float = 4.0


class AssignmentState:
    """Path sets, link flows and queue state carried between intervals."""

    def __init__(self, network: Network, demands: Sequence[ODPair], params: ConvergenceParams):
        self.network = network
        self.ods = sorted(demands, key=lambda od: (od.origin, od.destination))
        self.params = params
        self.slope_rule = _kernel.SLOPE_INFLOW if params.slope == "inflow" else _kernel.SLOPE_QUEUE
        node_pos, frm, to, ptr, adj = network.kernel_arrays()
        self._node_pos = node_pos
        self.frm, self.to, self.ptr, self.adj = frm, to, ptr, adj
        self.tf = network.free_flow_times
        for od in self.ods:
            for n in (od.origin, od.destination):
                if n not in node_pos:
                    raise NetworkError(f"OD ({od.origin},{od.destination}) uses unknown node {n}")
        self.od_o = np.array([node_pos[od.origin] for od in self.ods], dtype=np.int64)
        self.od_d = np.array([node_pos[od.destination] for od in self.ods], dtype=np.int64)
        self.base_demand = np.array([od.demand for od in self.ods], dtype=float)
        N, K, V = len(self.ods), params.max_paths, len(node_pos)
        self.ps_links = np.zeros((N, K, V), dtype=np.int64)
        self.ps_len = np.zeros((N, K), dtype=np.int64)
        self.ps_flow = np.zeros((N, K))
        self.ps_n = np.zeros(N, dtype=np.int64)
        self.queue = QueueState.zeros(network.n_links)
        self.x = np.zeros(network.n_links)
        self.tt = self.tf.copy()

    @property
    def od_keys(self) -> list[tuple[int, int]]:
        return [(od.origin, od.destination) for od in self.ods]

    def path_sets(self) -> dict[tuple[int, int], dict[Path, float]]:
        ids = self.network.link_ids
        out = {}
        for n, key in enumerate(self.od_keys):
            out[key] = {
                tuple(int(ids[i]) for i in self.ps_links[n, k, : self.ps_len[n, k]]): float(self.ps_flow[n, k])
                for k in range(self.ps_n[n])
            }
        return out

    def solve(self, demand: np.ndarray, cost) -> dict:
        """Equilibrate one interval under ``cost`` (QueueCost or BPRCost)."""
        p = self.params
        if isinstance(cost, QueueCost):
            model, q, mu, dt, alpha, beta = _kernel.QBTD, cost.queue, cost.capacity, cost.dt, 0.0, 1.0
        elif isinstance(cost, BPRCost):
            model, q, mu, dt, alpha, beta = _kernel.BPR, self.tf, cost.capacity, 0.0, cost.alpha, cost.beta
        else:
            raise TypeError(f"unknown link cost model {cost!r}")
        mu = np.maximum(np.asarray(mu, dtype=float), MIN_CAPACITY)
        N = len(self.ods)
        od_gap = np.zeros(N)
        od_iters = np.zeros(N, dtype=np.int64)
        status, bad, cons, min_flow = _kernel.assign_interval(
            self.ptr, self.adj, self.frm, self.to, self.tf,
            self.od_o, self.od_d, np.asarray(demand, dtype=float),
            model, np.asarray(q, dtype=float), mu, float(dt), float(alpha), float(beta), self.slope_rule,
            p.gap_tol, p.max_iters, p.flow_eps,
            self.ps_links, self.ps_len, self.ps_flow, self.ps_n,
            self.x, self.tt, od_gap, od_iters,
        )
        if status == _kernel.UNREACHABLE:
            o, d = self.od_keys[bad]
            raise NetworkError(f"OD pair ({o},{d}) is unreachable")
        if status == _kernel.OVERFLOW:
            o, d = self.od_keys[bad]
            raise RuntimeError(f"path set for OD ({o},{d}) exceeded max_paths={p.max_paths}")
        return {
            "inner_od_gap": od_gap,
            "od_iters": od_iters,
            "conservation_error": cons,
            "min_path_flow": min_flow,
        }

    def gaps(self, link_times: np.ndarray, demand: np.ndarray) -> np.ndarray:
        """Per-OD relative gap of the current path flows under ``link_times``."""
        N = len(self.ods)
        out = np.zeros(N)
        cstar = np.zeros(N)
        _kernel.evaluate_gaps(
            self.ptr, self.adj, self.frm, self.to, np.asarray(link_times, dtype=float),
            self.od_o, self.od_d, np.asarray(demand, dtype=float),
            self.ps_links, self.ps_len, self.ps_flow, self.ps_n,
            out, cstar,
        )
        return out


def aggregate_gap(od_gap: np.ndarray, demand: np.ndarray) -> float:
    """Demand-weighted mean of per-OD gaps."""
    total = float(np.sum(demand))
    if total <= 0:
        return 0.0
    return float(np.dot(od_gap, demand) / total)


def queue_link_times(tf, q_prev, x, mu_prev, dt) -> np.ndarray:
    mu_prev = np.maximum(mu_prev, MIN_CAPACITY)
    return tf + np.maximum(0.0, q_prev + dt * (x - mu_prev)) / mu_prev


@dataclass
class IntervalResult:
    m: int
    flow: np.ndarray  # veh/hr per link
    travel_time: np.ndarray  # hours
    queue: np.ndarray  # Q(m), vehicles
    capacity: np.ndarray  # discharge rate used in the link times, veh/hr
    od_gap: np.ndarray
    od_iters: np.ndarray
    gap: float
    iterations: int
    conservation_error: float
    min_path_flow: float
    corrected_od_gap: np.ndarray | None = None
    corrected_gap: float | None = None

    @property
    def delay(self) -> np.ndarray:
        return self.travel_time - self._tf

    _tf: np.ndarray = field(default=None, repr=False)


def assign_interval(
    state: AssignmentState,
    m: int,
    profile: CapacityProfile,
    demand: np.ndarray,
    dt: float,
    queue_commit: str = "prev",
) -> IntervalResult:
    """Equilibrate interval m and commit Q(m).

    Link times use Q(m-1) and mu(m-1); Q(m) is committed with mu(m-1)
    (``queue_commit="prev"``) or mu(m) (``"curr"``).
    """
    mu_prev = profile.rates[m - 1]
    mu_curr = profile.rates[m]
    q_prev = state.queue.queue.copy()
    info = state.solve(demand, QueueCost(q_prev, mu_prev, dt))
    od_gap = state.gaps(state.tt, demand)
    x = state.x.copy()
    tt = state.tt.copy()
    state.queue.advance(x, _commit_rate(queue_commit, mu_prev, mu_curr), dt)
    return IntervalResult(
        m=m,
        flow=x,
        travel_time=tt,
        queue=state.queue.queue.copy(),
        capacity=np.asarray(mu_prev, dtype=float).copy(),
        od_gap=od_gap,
        od_iters=info["od_iters"],
        gap=aggregate_gap(od_gap, demand),
        iterations=int(info["od_iters"].max(initial=0)),
        conservation_error=info["conservation_error"],
        min_path_flow=info["min_path_flow"],
        _tf=state.tf,
    )


def _commit_rate(queue_commit, mu_prev, mu_curr):
    if queue_commit == "prev":
        return mu_prev
    if queue_commit == "curr":
        return mu_curr
    raise ValueError(f"queue_commit must be 'prev' or 'curr', got {queue_commit!r}")


@dataclass
class AssignmentResult:
    link_ids: np.ndarray
    od_keys: list[tuple[int, int]]
    demand: np.ndarray  # (M, N) veh/hr
    dt: float
    flow: np.ndarray  # (M, E)
    travel_time: np.ndarray  # (M, E)
    queue: np.ndarray  # (M, E)
    capacity: np.ndarray  # (M, E)
    od_gap: np.ndarray  # (M, N)
    od_iters: np.ndarray  # (M, N)
    gap: np.ndarray  # (M,)
    iterations: np.ndarray  # (M,)
    conservation_error: np.ndarray  # (M,)
    min_path_flow: np.ndarray  # (M,)
    path_sets: dict = field(default_factory=dict)
    corrected_gap: np.ndarray | None = None
    corrected_od_gap: np.ndarray | None = None
    model: str = "proposed"
    queue_identity_error: float = 0.0  # max |Q - (cum in - cum out)|, vehicles

    @property
    def n_intervals(self) -> int:
        return len(self.gap)

    @property
    def tstt(self) -> float:
        return tstt(self)

    def converged_share(self, tol: float, corrected: bool = False) -> float:
        g = self.corrected_gap if corrected else self.gap
        return float(np.mean(g <= tol))


def tstt(result: AssignmentResult) -> float:
    """Total system travel time, veh-hours: sum over m, links of x * dt * tt."""
    return float(np.sum(result.flow * result.travel_time) * result.dt)


def _demand_matrix(state: AssignmentState, M: int, demand_scale) -> np.ndarray:
    if demand_scale is None:
        return np.tile(state.base_demand, (M, 1))
    scale = np.asarray(demand_scale, dtype=float)
    if scale.ndim == 0:
        return np.tile(state.base_demand * float(scale), (M, 1))
    if scale.shape != (M,):
        raise ValueError(f"demand_scale must have one entry per interval ({M})")
    return scale[:, None] * state.base_demand[None, :]


def _collect(rows: list[IntervalResult], state, demand, dt, model="proposed", queue=None) -> AssignmentResult:
    stack = lambda name: np.array([getattr(r, name) for r in rows])
    res = AssignmentResult(
        link_ids=state.network.link_ids,
        od_keys=state.od_keys,
        demand=demand,
        dt=dt,
        flow=stack("flow"),
        travel_time=stack("travel_time"),
        queue=stack("queue"),
        capacity=stack("capacity"),
        od_gap=stack("od_gap"),
        od_iters=stack("od_iters"),
        gap=stack("gap"),
        iterations=stack("iterations"),
        conservation_error=stack("conservation_error"),
        min_path_flow=stack("min_path_flow"),
        path_sets=state.path_sets(),
        model=model,
        queue_identity_error=(queue or state.queue).identity_error(),
    )
    if rows and rows[0].corrected_gap is not None:
        res.corrected_gap = stack("corrected_gap")
        res.corrected_od_gap = stack("corrected_od_gap")
    return res


def run_assignment(
    network: Network,
    demands: Sequence[ODPair],
    profile: CapacityProfile,
    grid: TimeGrid,
    params: ConvergenceParams = ConvergenceParams(),
    queue_commit: str = "prev",
    demand_scale=None,
) -> AssignmentResult:
    """Run intervals 1..M from empty queues and empty path sets."""
    M = grid.n_intervals
    if profile.n_intervals != M:
        raise ValueError("capacity profile does not match the time grid")
    state = AssignmentState(network, demands, params)
    demand = _demand_matrix(state, M, demand_scale)
    rows = [
        assign_interval(state, m, profile, demand[m - 1], grid.step, queue_commit)
        for m in range(1, M + 1)
    ]
    return _collect(rows, state, demand, grid.step)


def link_flows_from_paths(path_sets: Mapping, network: Network) -> dict[int, float]:
    """x_ij = sum of flows of the paths using (i, j)."""
    x = {l.id: 0.0 for l in network.links}
    for paths in path_sets.values():
        for path, h in paths.items():
            for lid in path:
                x[lid] += h
    return x


def path_cost(path: Path, link_times: Mapping[int, float]) -> float:
    return float(sum(link_times[l] for l in path))


def newton_shift(cost_nonbasic: float, cost_basic: float, derivative_sum: float, flow: float) -> float:
    """Flow to move from a nonbasic path onto the basic (shortest) path.

    min(flow, (c - c_basic) / derivative_sum); the whole path flow moves when
    the derivative sum vanishes.
    """
    if flow < 0:
        raise ValueError("path flow must be nonnegative")
    if derivative_sum < _kernel.MIN_DERIVATIVE:
        return flow
    return min(flow, (cost_nonbasic - cost_basic) / derivative_sum)


def relative_gap(path_sets: Mapping, link_times: Mapping[int, float], demands: Sequence[ODPair], network: Network):
    """Per-OD gaps (sum h c - d c*) / (d c*) and their demand-weighted mean."""
    per_od = {}
    weights = {}
    for od in demands:
        key = (od.origin, od.destination)
        if od.demand <= 0 or od.origin == od.destination:
            per_od[key] = 0.0
            weights[key] = od.demand
            continue
        _, cstar = shortest_path(network, link_times, od.origin, od.destination)
        paths = path_sets.get(key, {})
        total = sum(h * path_cost(p, link_times) for p, h in paths.items())
        per_od[key] = max(0.0, (total - od.demand * cstar) / (od.demand * cstar))
        weights[key] = od.demand
    wsum = sum(weights.values())
    agg = sum(per_od[k] * weights[k] for k in per_od) / wsum if wsum > 0 else 0.0
    return per_od, agg


def write_link_csv(result: AssignmentResult, path, header_comment: str | None = None) -> None:
    """interval,link_id,flow_vph,queue_veh,travel_time_s,capacity_vph"""
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["interval", "link_id", "flow_vph", "queue_veh", "travel_time_s", "capacity_vph"])
        for m in range(result.n_intervals):
            for i, lid in enumerate(result.link_ids):
                w.writerow([
                    m + 1, int(lid),
                    f"{result.flow[m, i]:.6f}", f"{result.queue[m, i]:.6f}",
                    f"{result.travel_time[m, i] * 3600:.6f}", f"{result.capacity[m, i]:.6f}",
                ])


def write_gap_csv(result: AssignmentResult, path, header_comment: str | None = None) -> None:
    """interval,od,iterations,relative_gap[,corrected_gap]"""
    corrected = result.corrected_od_gap is not None
    with open(path, "w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        cols = ["interval", "od", "iterations", "relative_gap"]
        w.writerow(cols + (["corrected_gap"] if corrected else []))
        for m in range(result.n_intervals):
            for n, (o, d) in enumerate(result.od_keys):
                row = [m + 1, f"{o}-{d}", int(result.od_iters[m, n]), f"{result.od_gap[m, n]:.9g}"]
                if corrected:
                    row.append(f"{result.corrected_od_gap[m, n]:.9g}")
                w.writerow(row)
