"""Network model, GMNS-style CSV ingestion and path search.

Internally all times are hours and flows veh/hr; lengths are miles and
speeds mph at the file boundary. Links are kept sorted by id so that array
positions and id order agree, which the lexicographic tie-break relies on.
"""
from __future__ import annotations

import csv
import heapq
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

Path = tuple[int, ...]
"""A route as an ordered tuple of link ids."""

# relative tolerance used to treat two path costs as tied
TIE_RTOL = 1e-12


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    x: float = 0.0
    y: float = 0.0


@dataclass(frozen=True)
class Link:
    id: int
    from_node: int
    to_node: int
    length: float  # miles
    free_speed: float  # mph
    lanes: int
    base_capacity: float  # veh/hr, all lanes
    backward_wave_speed: float = 0.0  # mph, carried but unused

    @property
    def free_flow_time(self) -> float:
        """Free-flow traversal time in hours."""
        return self.length / self.free_speed


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    demand: float  # veh/hr


@dataclass(frozen=True)
class TimeGrid:
    horizon: float  # hours
    step: float  # hours

    def __post_init__(self):
        if self.step <= 0 or self.horizon <= 0:
            raise ValueError("horizon and step must be positive")
        ratio = self.horizon / self.step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError(
                f"step {self.step * 3600:g} s does not divide horizon "
                f"{self.horizon * 3600:g} s"
            )

    @classmethod
    def from_seconds(cls, horizon_s: float, step_s: float) -> "TimeGrid":
        return cls(horizon_s / 3600.0, step_s / 3600.0)

    @property
    def n_intervals(self) -> int:
        return int(round(self.horizon / self.step))

    def midpoint(self, m: int) -> float:
        """Midpoint (hours) of interval m, which spans [(m-1)*step, m*step]."""
        return (m - 0.5) * self.step


@dataclass
class Network:
    nodes: dict[int, Node]
    links: list[Link]
    _index: dict[int, int] = field(init=False, repr=False)
    _out: dict[int, list[int]] = field(init=False, repr=False)
    _in: dict[int, list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.links:
            raise NetworkError("no links")
        self.links = sorted(self.links, key=lambda l: l.id)
        self._index = {}
        for i, link in enumerate(self.links):
            if link.id in self._index:
                raise NetworkError(f"duplicate link id {link.id}")
            for n in (link.from_node, link.to_node):
                if n not in self.nodes:
                    raise NetworkError(f"link {link.id} references unknown node {n}")
            if link.length <= 0 or link.free_speed <= 0 or link.base_capacity <= 0:
                raise NetworkError(
                    f"link {link.id}: length, free_speed and capacity must be positive"
                )
            if link.lanes < 1:
                raise NetworkError(f"link {link.id}: lanes must be >= 1")
            self._index[link.id] = i
        self._out = {n: [] for n in self.nodes}
        self._in = {n: [] for n in self.nodes}
        for link in self.links:
            self._out[link.from_node].append(link.id)
            self._in[link.to_node].append(link.id)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link(self, link_id: int) -> Link:
        return self.links[self._index[link_id]]

    def index(self, link_id: int) -> int:
        return self._index[link_id]

    def out_links(self, node: int) -> list[int]:
        return self._out[node]

    def in_links(self, node: int) -> list[int]:
        return self._in[node]

    @property
    def link_ids(self) -> np.ndarray:
        return np.array([l.id for l in self.links], dtype=np.int64)

    @property
    def free_flow_times(self) -> np.ndarray:
        return np.array([l.free_flow_time for l in self.links])

    @property
    def base_capacities(self) -> np.ndarray:
        return np.array([l.base_capacity for l in self.links])

    def link_by_nodes(self, i: int, j: int) -> Link:
        for lid in self._out.get(i, ()):
            if self.link(lid).to_node == j:
                return self.link(lid)
        raise KeyError(f"no link ({i},{j})")

    def path_from_nodes(self, nodes: Iterable[int]) -> Path:
        nodes = list(nodes)
        return tuple(self.link_by_nodes(a, b).id for a, b in zip(nodes, nodes[1:]))

    def path_nodes(self, path: Path) -> list[int]:
        if not path:
            return []
        nodes = [self.link(path[0]).from_node]
        nodes.extend(self.link(l).to_node for l in path)
        return nodes

    def validate_path(self, path: Path) -> None:
        """Raise unless ``path`` is a connected simple (link-distinct) path."""
        if len(set(path)) != len(path):
            raise NetworkError(f"path repeats a link: {path}")
        for a, b in zip(path, path[1:]):
            if self.link(a).to_node != self.link(b).from_node:
                raise NetworkError(f"links {a} and {b} are not consecutive")

    def times_array(self, link_times) -> np.ndarray:
        """Normalise a {link_id: hours} mapping or an aligned array."""
        if isinstance(link_times, Mapping):
            arr = np.array([link_times[l.id] for l in self.links], dtype=float)
        else:
            arr = np.asarray(link_times, dtype=float)
            if arr.shape != (self.n_links,):
                raise ValueError("link time array does not match link count")
        return arr

    def kernel_arrays(self):
        """Index-based arrays (0-based nodes) used by the compiled solver."""
        node_ids = sorted(self.nodes)
        node_pos = {n: i for i, n in enumerate(node_ids)}
        frm = np.array([node_pos[l.from_node] for l in self.links], dtype=np.int64)
        to = np.array([node_pos[l.to_node] for l in self.links], dtype=np.int64)
        order = np.lexsort((np.arange(len(frm)), frm))
        ptr = np.zeros(len(node_ids) + 1, dtype=np.int64)
        np.add.at(ptr, frm + 1, 1)
        ptr = np.cumsum(ptr)
        return node_pos, frm, to, ptr, order.astype(np.int64)


def _read_rows(path, required: list[str]) -> list[dict[str, str]]:
    path = FilePath(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise NetworkError(f"{path.name}: missing header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise NetworkError(f"{path.name}: missing columns {missing}")
        return list(reader)


def _num(row, key, cast, fname, lineno):
    try:
        return cast(row[key])
    except (TypeError, ValueError):
        raise NetworkError(f"{fname} row {lineno}: bad value for {key!r}: {row[key]!r}")


def load_network(node_file, link_file) -> Network:
    node_rows = _read_rows(node_file, ["node_id", "x_coord", "y_coord"])
    nodes: dict[int, Node] = {}
    for k, row in enumerate(node_rows, start=2):
        nid = _num(row, "node_id", int, "node.csv", k)
        if nid in nodes:
            raise NetworkError(f"node.csv row {k}: duplicate node id {nid}")
        nodes[nid] = Node(
            nid,
            _num(row, "x_coord", float, "node.csv", k),
            _num(row, "y_coord", float, "node.csv", k),
        )

    cols = ["link_id", "from_node_id", "to_node_id", "length", "free_speed", "lanes", "capacity"]
    link_rows = _read_rows(link_file, cols)
    if not link_rows:
        raise NetworkError("no links")
    links = []
    seen = set()
    for k, row in enumerate(link_rows, start=2):
        lid = _num(row, "link_id", int, "link.csv", k)
        if lid in seen:
            raise NetworkError(f"link.csv row {k}: duplicate link id {lid}")
        seen.add(lid)
        link = Link(
            id=lid,
            from_node=_num(row, "from_node_id", int, "link.csv", k),
            to_node=_num(row, "to_node_id", int, "link.csv", k),
            length=_num(row, "length", float, "link.csv", k),
            free_speed=_num(row, "free_speed", float, "link.csv", k),
            lanes=_num(row, "lanes", lambda s: int(float(s)), "link.csv", k),
            base_capacity=_num(row, "capacity", float, "link.csv", k),
            backward_wave_speed=float(row.get("backward_wave_speed") or 0.0),
        )
        for n in (link.from_node, link.to_node):
            if n not in nodes:
                raise NetworkError(f"link.csv row {k}: unknown node {n}")
        if link.length <= 0 or link.base_capacity <= 0 or link.free_speed <= 0:
            raise NetworkError(
                f"link.csv row {k}: length, free_speed and capacity must be positive"
            )
        links.append(link)
    return Network(nodes, links)


def load_demand(demand_file, network: Network) -> list[ODPair]:
    rows = _read_rows(demand_file, ["o_zone_id", "d_zone_id", "volume"])
    totals: dict[tuple[int, int], float] = {}
    for k, row in enumerate(rows, start=2):
        o = _num(row, "o_zone_id", int, "demand.csv", k)
        d = _num(row, "d_zone_id", int, "demand.csv", k)
        v = _num(row, "volume", float, "demand.csv", k)
        for n in (o, d):
            if n not in network.nodes:
                raise NetworkError(f"demand.csv row {k}: unknown node {n}")
        if v < 0:
            raise NetworkError(f"demand.csv row {k}: negative volume {v}")
        totals[(o, d)] = totals.get((o, d), 0.0) + v
    return [ODPair(o, d, v) for (o, d), v in totals.items()]


def _tied(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


def _shortest(network, times, origin, destination, banned_links=(), banned_nodes=()):
    """Dijkstra plus a lexicographic pass over the tight subgraph.

    Returns (path, cost) or (None, inf).
    """
    if origin == destination:
        return (), 0.0
    banned_links = set(banned_links)
    banned_nodes = set(banned_nodes)
    if origin in banned_nodes:
        return None, math.inf
    dist = {origin: 0.0}
    heap = [(0.0, origin)]
    settled = []
    done = set()
    while heap:
        du, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        settled.append(u)
        for lid in network.out_links(u):
            if lid in banned_links:
                continue
            v = network.link(lid).to_node
            if v in banned_nodes or v in done:
                continue
            nd = du + times[network.index(lid)]
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    if destination not in done:
        return None, math.inf

    # best[v]: lexicographically smallest link sequence among (near-)shortest
    best: dict[int, Path] = {origin: ()}
    for v in settled[1:]:
        cand = None
        for lid in network.in_links(v):
            u = network.link(lid).from_node
            if lid in banned_links or best.get(u) is None:
                continue
            if _tied(dist[u] + times[network.index(lid)], dist[v]):
                seq = best[u] + (lid,)
                if cand is None or seq < cand:
                    cand = seq
        best[v] = cand
    return best[destination], dist[destination]


def shortest_path(network: Network, link_times, origin: int, destination: int):
    """Minimum-time path and its cost.

    Ties are resolved toward the lexicographically smallest link-id
    sequence. Raises NetworkError if the destination is unreachable.
    """
    times = network.times_array(link_times)
    tf = network.free_flow_times
    if not np.all(np.isfinite(times)) or np.any(times < tf - 1e-12):
        raise ValueError("link times must be finite and not below free-flow time")
    path, cost = _shortest(network, times, origin, destination)
    if path is None:
        raise NetworkError(f"destination {destination} unreachable from {origin}")
    return path, cost


def path_cost(path: Path, network: Network, link_times) -> float:
    times = network.times_array(link_times)
    return float(sum(times[network.index(l)] for l in path))


def iter_shortest_paths(network: Network, link_times, origin: int, destination: int) -> Iterator:
    """Yield loopless paths in nondecreasing cost order (Yen's algorithm)."""
    times = network.times_array(link_times)
    first, cost = _shortest(network, times, origin, destination)
    if first is None:
        return
    accepted = [first]
    yield first, cost
    if origin == destination:
        return
    heap: list = []
    queued = {first}
    while True:
        prev = accepted[-1]
        prev_nodes = network.path_nodes(prev)
        for i in range(len(prev)):
            spur = prev_nodes[i]
            root = prev[:i]
            banned_links = {p[i] for p in accepted if len(p) > i and p[:i] == root}
            banned_nodes = set(prev_nodes[:i])
            tail, tail_cost = _shortest(
                network, times, spur, destination, banned_links, banned_nodes
            )
            if tail is None:
                continue
            cand = root + tail
            if cand in queued:
                continue
            queued.add(cand)
            total = sum(times[network.index(l)] for l in cand)
            heapq.heappush(heap, (total, cand))
        if not heap:
            return
        total, path = heapq.heappop(heap)
        accepted.append(path)
        yield path, total


def k_shortest_paths(network: Network, link_times, origin: int, destination: int, k: int):
    """Up to ``k`` loopless paths, cheapest first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = []
    for path, _ in iter_shortest_paths(network, link_times, origin, destination):
        out.append(path)
        if len(out) == k:
            break
    return out


def path_free_flow_time(path: Path, network: Network, speed: float | None = None) -> float:
    """Traversal time (hours) of ``path`` at ``speed`` mph, or at link free speeds."""
    if speed is not None and speed <= 0:
        raise ValueError("speed must be positive")
    total = 0.0
    for lid in path:
        link = network.link(lid)
        total += link.length / (speed if speed is not None else link.free_speed)
    return total
