"""Demand and ATMA-speed sweeps over the Sioux Falls candidate routes."""
import argparse
import os
from pathlib import Path

from qbta import ConvergenceParams, TimeGrid, data_dir, load_demand, load_network
from qbta.optimizer import Scenario, SensitivitySpec, enumerate_candidates, sensitivity_sweep, write_sensitivity_csv

MAINTENANCE = [(6, 8), (16, 17), (15, 22), (11, 14)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--multipliers", default="1.0,1.1,1.2,1.3")
    ap.add_argument("--speeds", default="10,15,20")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="results/sensitivity.csv")
    a = ap.parse_args()
    d = data_dir("sioux_falls")
    net = load_network(d / "node.csv", d / "link.csv")
    dem = load_demand(d / "demand.csv", net)
    maint = [net.link_by_nodes(*p).id for p in MAINTENANCE]
    routes = enumerate_candidates(net, 6, 14, maint, 10, True, 10.0)
    sc = Scenario(net, tuple(dem), TimeGrid.from_seconds(5 * 3600, 5), ConvergenceParams(gap_tol=1e-3, max_iters=20))
    spec = SensitivitySpec(
        tuple(float(v) for v in a.multipliers.split(",") if v), tuple(float(v) for v in a.speeds.split(",") if v)
    )
    points = sensitivity_sweep(spec, routes, sc, jobs=a.jobs)
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    write_sensitivity_csv(points, a.out)
    ref = next((p.baseline_tstt for p in points if p.param == "demand" and p.value == 1.0), None)
    for p in points:
        growth = f" ({100 * (p.baseline_tstt / ref - 1):+.1f}% vs x1.0)" if ref and p.param == "demand" else ""
        costs = [e.system_cost_pct for e in p.ranked]
        print(f"{p.param} {p.value:g}: baseline {p.baseline_tstt:,.0f}{growth}; added TSTT "
              f"{min(costs):.3f}%..{max(costs):.3f}%, cheapest routes {[e.index for e in p.ranked[:3]]}")


if __name__ == "__main__":
    main()
