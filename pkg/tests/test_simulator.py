import json
import math
from collections import Counter

import numpy as np
import pytest

from oracles import grid_argmax
from resid.errors import ConfigurationError
from resid.estimator import INTERIOR, UNDEFINED, estimate_mle
from resid.model import ModelParams
from resid.records import extract_statistics, truncate
from resid.simulator import (
    ExperimentConfig,
    Node,
    ProgramGraph,
    experiment_grid,
    get_graph,
    independence_mc,
    loglik_curve,
    make_rng,
    run_cell,
    run_session,
    simulate_run,
)

# 99.9% quantile of chi-square with 99 degrees of freedom
CHI2_999_DF99 = 148.23035916510173
FROZEN = 10_000  # debug count large enough that alpha**count underflows to 0


def test_p_zero_always_succeeds():
    rng = make_rng(1)
    for graph_name in ("fig1-if", "fig2-loop", "fig3-flowchart"):
        graph = get_graph(graph_name)
        for _ in range(50):
            record = simulate_run(graph, {}, 0.0, 0.9, rng)
            assert record.success
            assert record.visits[0] == graph.entry


def test_p_one_fails_at_entry():
    record = simulate_run(get_graph("fig3-flowchart"), {}, 1.0, 0.9, make_rng(2))
    assert record.visits == ("1",)
    assert record.bugs == {"1"}
    assert record.removed


def test_bug_triggers_on_first_visit_in_loop():
    graph = ProgramGraph(
        {
            "1": Node("1", "loop", body="2", exit="3", iterations=(3, 3)),
            "2": Node("2"),
            "3": Node("3"),
        },
        "1",
    )
    clean = simulate_run(graph, {"1": FROZEN, "2": FROZEN, "3": FROZEN}, 1.0, 0.5, make_rng(3))
    assert clean.visits == ("1", "2", "2", "2", "3")
    record = simulate_run(graph, {"1": FROZEN, "3": FROZEN}, 1.0, 0.5, make_rng(3))
    assert record.visits == ("1", "2")
    assert record.bugs == {"2"}


def test_trigger_probability_below_one_can_defer_failure():
    graph = get_graph("fig2-loop")
    rng = make_rng(4)
    lengths = Counter()
    for _ in range(300):
        record = simulate_run(graph, {"1": FROZEN, "3": FROZEN}, 1.0, 0.5, rng, trigger_prob=0.2)
        if record.bugs:
            lengths[len(record.visits)] += 1
            assert truncate(record) == ["1", "2"]
    assert max(lengths) > 2


def test_empty_session():
    records, state = run_session(get_graph("fig1-if"), ExperimentConfig(0.5, 0.9, 0))
    assert records == []
    assert state.processed_runs == 0


def test_no_bugs_means_undefined():
    _, state = run_session(get_graph("fig3-flowchart"), ExperimentConfig(0.0, 0.9, 30))
    assert state.stats.m == 0
    assert estimate_mle(extract_statistics(state), ModelParams(0.9)).status == UNDEFINED


def test_session_deterministic():
    config = ExperimentConfig(0.4, 0.6, 40, seed=99)
    graph = get_graph("fig3-flowchart")
    a, sa = run_session(graph, config, (5,))
    b, sb = run_session(graph, config, (5,))
    assert a == b and sa == sb
    c, _ = run_session(graph, config, (6,))
    assert a != c


def test_session_sequence_numbers_and_debug_counts():
    records, state = run_session(get_graph("fig1-if"), ExperimentConfig(0.5, 0.9, 25, seed=3))
    assert [r.seq for r in records] == list(range(1, 26))
    fixes = Counter(next(iter(r.bugs)) for r in records if r.bugs)
    assert {c: d for c, d in state.debug_counts.items() if d} == dict(fixes)


def test_bug_injection_rate():
    # freeze debug counts and read the mark rate of the entry chunk off p=1 runs
    graph = get_graph("fig1-if")
    counts = {"1": 2}
    p, alpha, trials = 0.8, 0.6, 20_000
    rng = make_rng(5)
    hits = sum(bool(simulate_run(graph, counts, p, alpha, rng).bugs & {"1"}) for _ in range(trials))
    expected = p * alpha**2
    se = math.sqrt(expected * (1 - expected) / trials)
    assert abs(hits / trials - expected) <= 3 * se


def test_branch_frequencies():
    graph = get_graph("fig3-flowchart")
    rng = make_rng(6)
    trials = 20_000
    took_loop = sum(simulate_run(graph, {}, 0.0, 0.9, rng).visits[1] == "2" for _ in range(trials))
    se = math.sqrt(0.25 / trials)
    assert abs(took_loop / trials - 0.5) <= 3 * se


def test_loop_lengths_uniform():
    graph = get_graph("fig3-flowchart")
    rng = make_rng(7)
    lengths = []
    while len(lengths) < 20_000:
        visits = simulate_run(graph, {}, 0.0, 0.9, rng).visits
        if visits[1] == "2":
            lengths.append(visits.count("3"))
    observed = np.bincount(lengths, minlength=101)[1:]
    assert observed.sum() == len(lengths)
    expected = len(lengths) / 100
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    assert chi2 < CHI2_999_DF99


def test_large_session_close_to_truth_and_oracle():
    graph = get_graph("fig3-flowchart")
    _, state = run_session(graph, ExperimentConfig(0.4, 0.9, 5000, seed=11))
    stats = extract_statistics(state)
    est = estimate_mle(stats, ModelParams(0.9))
    assert est.status == INTERIOR
    assert abs(est.p_hat - 0.4) <= 0.05
    assert abs(est.p_hat - grid_argmax(stats.m, stats.n, 0.9)) <= 1e-5


def test_bias_shrinks_with_session_length():
    graph = get_graph("fig3-flowchart")
    short = run_cell(graph, 0.6, 0.3, 50, 60, seed=21)
    long = run_cell(graph, 0.6, 0.3, 500, 60, seed=21)
    band = 3 * math.sqrt(long.variance / long.estimates) + 3 * math.sqrt(short.variance / short.estimates)
    assert abs(long.mean - 0.6) <= abs(short.mean - 0.6) + band
    assert long.variance < short.variance


def test_experiment_grid_cells_and_flags():
    graph = get_graph("fig1-if")
    cells = experiment_grid(graph, [0.0, 0.5], [0.9], 10, 4, seed=1)
    assert [(c.p, c.alpha) for c in cells] == [(0.0, 0.9), (0.5, 0.9)]
    assert cells[0].flagged and cells[0].skipped == 4 and math.isnan(cells[0].mean)
    assert not cells[1].flagged and cells[1].estimates + cells[1].skipped == 4


def test_grid_cell_high_p():
    cell = run_cell(get_graph("fig3-flowchart"), 0.9, 0.9, 50, 100, seed=0, cell=8)
    assert abs(cell.mean - 0.9) <= 0.05
    assert cell.variance <= 0.03


def test_loglik_curve_grid():
    _, state = run_session(get_graph("fig3-flowchart"), ExperimentConfig(0.4, 0.9, 100, seed=2))
    grid, values = loglik_curve(extract_statistics(state), 0.9)
    assert len(grid) == 999 and grid[0] == 0.001 and grid[-1] == 0.999
    assert np.isfinite(values).all()


class TestIndependence:
    def test_certain_events(self):
        r = independence_mc(1.0, 1.0, 1000)
        assert r.joint == r.product == 1.0

    def test_impossible_events(self):
        r = independence_mc(0.0, 0.7, 1000)
        assert r.joint == r.product == 0.0

    def test_product_space(self):
        r = independence_mc(0.5, 0.4, 200_000, seed=3)
        assert abs(r.joint - 0.04) <= 3 * r.standard_error
        assert abs(r.joint - r.product) <= 3 * r.standard_error


class TestGraphFormat:
    @pytest.mark.parametrize("name", ["fig1-if", "fig2-loop", "fig3-flowchart"])
    def test_round_trip(self, name):
        graph = get_graph(name)
        assert ProgramGraph.from_json(json.dumps(graph.to_dict())) == graph

    def test_unknown_builtin(self):
        with pytest.raises(ConfigurationError):
            get_graph("fig9")

    @pytest.mark.parametrize(
        "nodes, entry",
        [
            ({"1": Node("1", "branch", targets=(("2", 0.5), ("2", 0.4))), "2": Node("2")}, "1"),
            ({"1": Node("1", next="2"), "2": Node("2", next="1")}, "1"),
            ({"1": Node("1", next="9")}, "1"),
            ({"1": Node("1", "loop")}, "1"),
            ({"1": Node("1")}, "0"),
            ({"1": Node("1", "jump")}, "1"),
        ],
    )
    def test_invalid_graphs(self, nodes, entry):
        with pytest.raises(ConfigurationError):
            ProgramGraph(nodes, entry)

    def test_wrong_header(self):
        with pytest.raises(ConfigurationError):
            ProgramGraph.from_dict({"format": "other", "version": 1, "entry": "1", "nodes": []})


@pytest.mark.parametrize(
    "kwargs",
    [dict(p_true=1.5), dict(alpha=1.0), dict(runs_per_session=-1), dict(replications=0), dict(seed=-1)],
)
def test_experiment_config_validation(kwargs):
    base = dict(p_true=0.5, alpha=0.9, runs_per_session=10)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**{**base, **kwargs})
