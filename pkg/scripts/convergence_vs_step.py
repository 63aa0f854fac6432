"""Iterations needed per interval on the two-path network for several step sizes."""
import argparse
import csv
from pathlib import Path

from qbta import ConvergenceParams, TimeGrid, base_profile, data_dir, load_demand, load_network, run_assignment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", default="5,10,15,30,60", help="step sizes in seconds")
    ap.add_argument("--horizon-s", type=float, default=600)
    ap.add_argument("--gap-tol", type=float, default=1e-4)
    ap.add_argument("--out", default="results/convergence_vs_step.csv")
    a = ap.parse_args()
    d = data_dir("two_path")
    net = load_network(d / "node.csv", d / "link.csv")
    dem = load_demand(d / "demand.csv", net)
    params = ConvergenceParams(gap_tol=a.gap_tol, max_iters=200)
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    with open(a.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step_s", "interval", "iterations", "relative_gap"])
        for step in (float(s) for s in a.steps.split(",")):
            grid = TimeGrid.from_seconds(a.horizon_s, step)
            res = run_assignment(net, dem, base_profile(net, grid), grid, params)
            for m in range(res.n_intervals):
                w.writerow([step, m + 1, int(res.iterations[m]), f"{res.gap[m]:.3e}"])
            print(f"step {step:>4g} s: max iterations {res.iterations.max()}, max gap {res.gap.max():.2e}")


if __name__ == "__main__":
    main()
