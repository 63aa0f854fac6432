"""Command-line front end: ``qbta assign | optimize | sensitivity``.

Times on the command line and in outputs are seconds; flows are veh/hr.
Exit codes: 0 ok, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_dir
from .benchmarks import MODELS, run_model
from .capacity import ATMARoute, base_profile, build_atma_schedule, compile_profile, load_events
from .network import NetworkError, TimeGrid, load_demand, load_network, path_free_flow_time
from .optimizer import Scenario, SensitivitySpec, enumerate_candidates, optimize, sensitivity_sweep
from .optimizer import write_ranking_csv, write_sensitivity_csv
from .solver import ConvergenceParams, write_gap_csv, write_link_csv

log = logging.getLogger("qbta")

BUNDLED = ("two_path", "sioux_falls")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    network_dir: str
    demand: str | None = None
    events: str | None = None
    horizon_s: float = 600.0
    dt_s: float = 30.0
    gap_tol: float = 1e-4
    max_iters: int = 20
    flow_eps: float = 1e-6
    max_paths: int = 64
    slope: str = "queue"
    theta: float | None = None
    atma_route: list[int] | None = None  # node sequence
    atma_od: list[int] | None = None
    k: int = 10
    maintenance: list[list[int]] | None = None  # node pairs
    require_coverage: bool = False
    atma_speed_mph: float = 10.0
    atma_start_s: float = 0.0
    model: str = "proposed"
    queue_commit: str = "prev"
    demand_multipliers: list[float] | None = None
    speeds_mph: list[float] | None = None
    out: str = "out"
    jobs: int = 1

    def validate(self) -> None:
        if self.horizon_s <= 0:
            raise ConfigError("--horizon-s must be positive")
        if self.dt_s <= 0:
            raise ConfigError("--dt-s must be positive")
        try:
            TimeGrid.from_seconds(self.horizon_s, self.dt_s)
        except ValueError as e:
            raise ConfigError(f"--dt-s: {e}") from None
        if self.gap_tol <= 0:
            raise ConfigError("--gap-tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("--max-iters must be >= 1")
        if self.theta is not None and not 0.0 <= self.theta < 1.0:
            raise ConfigError("--theta must lie in [0, 1)")
        if self.atma_speed_mph <= 0:
            raise ConfigError("--atma-speed-mph must be positive")
        if self.k < 1:
            raise ConfigError("--k must be >= 1")
        if self.model not in MODELS:
            raise ConfigError(f"--model must be one of {MODELS}")
        if self.atma_route and self.atma_od:
            raise ConfigError("--atma-route and --atma-od are mutually exclusive")
        if self.atma_od is not None and len(self.atma_od) != 2:
            raise ConfigError("--atma-od takes two node ids, e.g. 6,14")
        if self.events and (self.atma_route or self.atma_od):
            raise ConfigError("--events cannot be combined with an ATMA route")
        if self.command in ("optimize", "sensitivity") and not (self.atma_route or self.atma_od):
            raise ConfigError(f"{self.command} needs --atma-route or --atma-od")
        if self.command == "sensitivity" and not (self.demand_multipliers or self.speeds_mph):
            raise ConfigError("nothing to sweep: give --demand-multipliers and/or --speeds-mph")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")

    def echo(self) -> dict:
        """Settings that can change results; out dir and jobs are left out."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("jobs")
        return d

    def hash(self) -> str:
        d = self.echo()
        blob = json.dumps(d, sort_keys=True).encode()
        for key in ("network_dir", "demand", "events"):
            p = self._resolve(d[key]) if key == "network_dir" else d[key]
            if p is None:
                continue
            p = Path(p)
            for f in sorted(p.glob("*.csv")) if p.is_dir() else [p]:
                if f.exists():
                    blob += f.read_bytes()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def _resolve(network_dir):
        if network_dir in BUNDLED and not Path(network_dir).exists():
            return Path(str(data_dir(network_dir)))
        return Path(network_dir)


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pairs(text: str) -> list[list[int]]:
    out = []
    for item in text.replace(" ", "").split(","):
        a, sep, b = item.partition("-")
        if not sep:
            raise argparse.ArgumentTypeError(f"maintenance links look like 6-8,16-17; got {item!r}")
        out.append([int(a), int(b)])
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("inputs")
    g.add_argument("--network-dir", required=True,
                   help="directory with node.csv and link.csv, or a bundled name: " + ", ".join(BUNDLED))
    g.add_argument("--demand", help="demand CSV (default: <network-dir>/demand.csv)")
    g.add_argument("--events", help="capacity events CSV overriding the ATMA schedule")
    g = common.add_argument_group("assignment")
    g.add_argument("--horizon-s", type=float, default=600.0)
    g.add_argument("--dt-s", type=float, default=30.0)
    g.add_argument("--gap-tol", type=float, default=1e-4, help="relative gap tolerance (fraction)")
    g.add_argument("--max-iters", type=int, default=20)
    g.add_argument("--flow-eps", type=float, default=1e-6)
    g.add_argument("--max-paths", type=int, default=64)
    g.add_argument("--slope", choices=("queue", "inflow"), default="queue")
    g.add_argument("--model", choices=MODELS, default="proposed")
    g.add_argument("--queue-commit-capacity", dest="queue_commit", choices=("prev", "curr"), default="prev")
    g = common.add_argument_group("ATMA")
    g.add_argument("--theta", type=float, help="capacity reduction fraction (default: one lane)")
    g.add_argument("--atma-route", type=_ints, help="node sequence, e.g. 6,8,9")
    g.add_argument("--atma-od", type=_ints, help="origin,destination for candidate routes")
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--maintenance", type=_pairs, help="links to cover, e.g. 6-8,16-17")
    g.add_argument("--require-coverage", action="store_true")
    g.add_argument("--atma-speed-mph", type=float, default=10.0)
    g.add_argument("--atma-start-s", type=float, default=0.0)
    g = common.add_argument_group("run")
    g.add_argument("--out", default="out")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qbta", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("assign", parents=[common], help="run one assignment")
    sub.add_parser("optimize", parents=[common], help="rank candidate ATMA routes")
    s = sub.add_parser("sensitivity", parents=[common], help="sweep demand and ATMA speed")
    s.add_argument("--demand-multipliers", type=_floats)
    s.add_argument("--speeds-mph", type=_floats)
    return p


def config_from_args(args) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


class Context:
    """Loaded inputs shared by all commands."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        ndir = RunConfig._resolve(cfg.network_dir)
        for name in ("node.csv", "link.csv"):
            if not (ndir / name).exists():
                raise ConfigError(f"--network-dir: {ndir / name} not found")
        demand = Path(cfg.demand) if cfg.demand else ndir / "demand.csv"
        if not demand.exists():
            raise ConfigError(f"--demand: {demand} not found")
        if cfg.events and not Path(cfg.events).exists():
            raise ConfigError(f"--events: {cfg.events} not found")
        try:
            self.network = load_network(ndir / "node.csv", ndir / "link.csv")
            self.demands = load_demand(demand, self.network)
        except (NetworkError, ValueError) as e:
            raise ConfigError(str(e)) from None
        self.grid = TimeGrid.from_seconds(cfg.horizon_s, cfg.dt_s)
        self.params = ConvergenceParams(cfg.gap_tol, cfg.max_iters, cfg.flow_eps, cfg.max_paths, cfg.slope)
        self.candidates = self._candidates()

    def _candidates(self) -> list[ATMARoute]:
        cfg, net = self.cfg, self.network
        start = cfg.atma_start_s / 3600.0
        try:
            if cfg.atma_route:
                route = ATMARoute(net.path_from_nodes(cfg.atma_route), start, cfg.atma_speed_mph)
                route.validate(net)
                return [route]
            if cfg.atma_od:
                maint = [net.link_by_nodes(a, b).id for a, b in (cfg.maintenance or [])]
                routes = enumerate_candidates(net, cfg.atma_od[0], cfg.atma_od[1], maint, cfg.k,
                                              cfg.require_coverage, cfg.atma_speed_mph, start)
                for r in routes:
                    r.validate(net)
                if not routes:
                    raise ConfigError(f"--atma-od: no route from {cfg.atma_od[0]} to {cfg.atma_od[1]}")
                return routes
        except (NetworkError, ValueError) as e:
            raise ConfigError(str(e)) from None
        return []

    def scenario(self) -> Scenario:
        c = self.cfg
        return Scenario(self.network, tuple(self.demands), self.grid, self.params, c.theta, c.queue_commit, 1.0, c.model)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _route_json(route: ATMARoute, network) -> dict:
    return {
        "links": list(route.path),
        "nodes": network.path_nodes(route.path),
        "speed_mph": route.speed,
        "start_s": route.start_time * 3600.0,
        "free_flow_time_s": path_free_flow_time(route.path, network) * 3600.0,
        "atma_time_s": path_free_flow_time(route.path, network, route.speed) * 3600.0,
    }


def cmd_assign(cfg: RunConfig, ctx: Context, out: Path, chash: str) -> int:
    net, grid = ctx.network, ctx.grid
    route = ctx.candidates[0] if ctx.candidates else None
    if cfg.events:
        profile = compile_profile(load_events(cfg.events), net, grid, cfg.theta)
    elif route is not None:
        profile = compile_profile(build_atma_schedule(route, net, cfg.theta), net, grid)
    else:
        profile = base_profile(net, grid)
    res = run_model(cfg.model, net, ctx.demands, profile, grid, ctx.params, queue_commit=cfg.queue_commit)
    tag = f"config_hash: {chash}"
    write_link_csv(res, out / "link_flows.csv", tag)
    write_gap_csv(res, out / "gap_trace.csv", tag)
    conv = res.gap <= cfg.gap_tol
    summary = {
        "config_hash": chash,
        "config": cfg.echo(),
        "model": cfg.model,
        "route": _route_json(route, net) if route else None,
        "tstt_vehh": res.tstt,
        "n_intervals": res.n_intervals,
        "intervals_converged": int(conv.sum()),
        "converged_share": float(conv.mean()),
        "max_gap": float(res.gap.max()),
        "mean_gap": float(res.gap.mean()),
        "max_iterations": int(res.iterations.max()),
        "iterations": res.iterations.tolist(),
        "gap": res.gap.tolist(),
        "max_conservation_error": float(res.conservation_error.max()),
    }
    if cfg.model != "proposed":
        summary["corrected_gap"] = res.corrected_gap.tolist()
        summary["mean_corrected_gap"] = float(np.mean(res.corrected_gap))
    _write_json(out / "summary.json", summary)
    print(f"TSTT {res.tstt:.6f} veh-h; {int(conv.sum())}/{res.n_intervals} intervals converged")
    return 0


def cmd_optimize(cfg: RunConfig, ctx: Context, out: Path, chash: str) -> int:
    best, ranked = optimize(ctx.candidates, ctx.scenario(), jobs=cfg.jobs)
    write_ranking_csv(ranked, out / "routes_ranked.csv", f"config_hash: {chash}")
    _write_json(out / "best_route.json", {
        "config_hash": chash,
        "config": cfg.echo(),
        "baseline_tstt_vehh": best.baseline_tstt,
        "best": {"candidate": best.index, **_route_json(best.route, ctx.network),
                 "tstt_vehh": best.tstt, "system_cost_vehh": best.system_cost,
                 "system_cost_pct": best.system_cost_pct},
    })
    print(f"best route: candidate {best.index}, +{best.system_cost_pct:.4f}% TSTT")
    return 0


def cmd_sensitivity(cfg: RunConfig, ctx: Context, out: Path, chash: str) -> int:
    spec = SensitivitySpec(tuple(cfg.demand_multipliers or ()), tuple(cfg.speeds_mph or ()))
    points = sensitivity_sweep(spec, ctx.candidates, ctx.scenario(), jobs=cfg.jobs)
    write_sensitivity_csv(points, out / "sensitivity.csv", f"config_hash: {chash}")
    _write_json(out / "sensitivity_summary.json", {
        "config_hash": chash,
        "config": cfg.echo(),
        "points": [
            {"param": p.param, "value": p.value, "baseline_tstt_vehh": p.baseline_tstt,
             "best_candidate": p.ranked[0].index,
             "system_cost_pct": {str(e.index): e.system_cost_pct for e in p.ranked}}
            for p in points
        ],
    })
    print(f"{len(points)} sweep points, {sum(len(p.ranked) for p in points)} route evaluations")
    return 0


COMMANDS = {"assign": cmd_assign, "optimize": cmd_optimize, "sensitivity": cmd_sensitivity}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = config_from_args(args)
    try:
        cfg.validate()
        ctx = Context(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        code = COMMANDS[cfg.command](cfg, ctx, out, cfg.hash())
        log.info("%s finished in %.1f s", cfg.command, time.perf_counter() - t0)
        return code
    except Exception as e:  # noqa: BLE001 - any failure past validation is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
