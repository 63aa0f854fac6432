import numpy as np
import pytest

from qbta.benchmarks import (
    BenchmarkKind,
    BPRParams,
    bpr_travel_time,
    corrected_relative_gap,
    run_benchmark,
    run_model,
    write_summary_csv,
)
from qbta.capacity import MPS_TO_MPH, ATMARoute, base_profile, build_atma_schedule, compile_profile
from qbta.network import TimeGrid
from qbta.solver import ConvergenceParams, relative_gap, run_assignment

from conftest import S

TIGHT = ConvergenceParams(gap_tol=1e-4, max_iters=100)
GRID = TimeGrid.from_seconds(600, 30)


def fig6_profile(net, theta=None):
    ev = build_atma_schedule(ATMARoute((1,), 0.0, 3.5 * MPS_TO_MPH), net, theta)
    return compile_profile(ev, net, GRID)


def test_bpr_examples():
    assert bpr_travel_time(0, 3000, 0.1) == 0.1
    assert bpr_travel_time(3000, 3000, 0.1) == pytest.approx(0.115)
    assert bpr_travel_time(6000, 3000, 0.1) == pytest.approx(0.34)
    with pytest.raises(ValueError):
        BPRParams(alpha=0)


def test_no_events_benchmark1_is_the_proposed_model(two_path):
    net, dem = two_path
    prof = base_profile(net, GRID)
    b1 = run_benchmark(BenchmarkKind.NoCapacityDrop, net, dem, prof, GRID, TIGHT)
    p = run_assignment(net, dem, prof, GRID, TIGHT)
    assert np.array_equal(b1.corrected_gap, p.gap)
    assert b1.flow.tobytes() == p.flow.tobytes()


def test_theta_zero_collapses_benchmark1(two_path):
    net, dem = two_path
    prof = fig6_profile(net, theta=0.0)
    b1 = run_model("benchmark1", net, dem, prof, GRID, TIGHT)
    p = run_model("proposed", net, dem, prof, GRID, TIGHT)
    assert b1.flow.tobytes() == p.flow.tobytes()
    assert b1.tstt == p.tstt


def test_benchmark1_rises_during_window_then_falls(two_path):
    net, dem = two_path
    prof = fig6_profile(net)
    g = run_model("benchmark1", net, dem, prof, GRID, TIGHT).corrected_gap
    inside = prof.rates[1:, 0] < 3000
    peak = g[inside].max()
    assert 0.1 < peak < 1.0
    assert np.all(np.diff(g[inside][2:]) > 0)  # climbing through the window
    assert np.all(g[~inside][1:] < peak)


def test_benchmark2_ends_high(two_path):
    net, dem = two_path
    g = run_model("benchmark2", net, dem, fig6_profile(net), GRID, TIGHT).corrected_gap
    assert 0.5 <= g[-1] <= 1.0
    assert np.all(np.diff(g[-4:]) > 0)  # still climbing at the horizon


def test_benchmark_result_uses_truth_state(two_path):
    net, dem = two_path
    prof = fig6_profile(net)
    res = run_benchmark(BenchmarkKind.BPRWithDrop, net, dem, prof, GRID, TIGHT)
    # truth queue on link 1 follows the true reduced capacity at the BPR flows
    q = 0.0
    for m in range(GRID.n_intervals):
        q = max(0.0, q + GRID.step * (res.flow[m, 0] - prof.rates[m, 0]))
        assert res.queue[m, 0] == pytest.approx(q)
    assert res.queue_identity_error <= 1e-6
    assert np.all(res.gap <= TIGHT.gap_tol)  # equilibrium under its own model


def test_corrected_gap_matches_relative_gap(two_path):
    net, dem = two_path
    times = {1: 100 * S, 2: 45 * S, 3: 45 * S, 4: 45 * S}
    flows = {(1, 4): {(1,): 3000.0, (2, 3, 4): 3000.0}}
    assert corrected_relative_gap(flows, times, dem, net) == relative_gap(flows, times, dem, net)
    relabelled = {(1, 4): {(2, 3, 4): 3000.0, (1,): 3000.0}}
    assert corrected_relative_gap(relabelled, times, dem, net)[1] == pytest.approx(0.175)


def test_unknown_model(two_path):
    net, dem = two_path
    with pytest.raises(ValueError):
        run_model("bench9", net, dem, base_profile(net, GRID), GRID)


def test_summary_csv(tmp_path):
    write_summary_csv([("proposed", "path 1", 0.00019)], tmp_path / "t.csv", "config_hash: abc")
    assert (tmp_path / "t.csv").read_text().splitlines() == [
        "# config_hash: abc", "model,path_scenario,avg_corrected_gap", "proposed,path 1,0.00019",
    ]
