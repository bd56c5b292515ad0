"""Simulated debugging sessions on small control-flow graphs.

Randomness comes from numpy's PCG64 generator seeded through
``SeedSequence(seed, spawn_key=stream)``; each replication, grid cell and
role (programmer vs. user) gets its own stream key, so results are
reproducible across platforms and independent of execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .estimator import UNDEFINED, BOUNDARY_HIGH, BOUNDARY_LOW, SolverConfig, estimate_mle
from .model import ModelParams, log_likelihood
from .records import RunRecord, SessionState, extract_statistics, process_run

GRAPH_FORMAT = "resid-graph"
GRAPH_VERSION = 1


@dataclass(frozen=True)
class Node:
    """A chunk together with how control leaves it.

    ``kind`` is ``linear`` (go to ``next``; ``None`` ends the enclosing
    path), ``branch`` (pick one of ``targets`` with the given probabilities)
    or ``loop`` (run the ``body`` path a uniform number of times in
    ``iterations``, then continue at ``exit``).
    """

    id: str
    kind: str = "linear"
    next: str | None = None
    targets: tuple[tuple[str, float], ...] = ()
    body: str | None = None
    exit: str | None = None
    iterations: tuple[int, int] = (1, 1)


@dataclass(frozen=True)
class ProgramGraph:
    nodes: Mapping[str, Node]
    entry: str

    def __post_init__(self):
        nodes = dict(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.entry not in nodes:
            raise ConfigurationError(f"entry node {self.entry!r} is not defined")
        for node in nodes.values():
            self._check_node(node, nodes)
        self._check_paths(nodes)

    @staticmethod
    def _check_node(node: Node, nodes):
        def known(target, role):
            if target is not None and target not in nodes:
                raise ConfigurationError(f"node {node.id!r}: {role} {target!r} is not defined")

        if node.kind == "linear":
            known(node.next, "next")
        elif node.kind == "branch":
            if not node.targets:
                raise ConfigurationError(f"node {node.id!r}: branch without targets")
            total = 0.0
            for target, prob in node.targets:
                known(target, "target")
                if not 0.0 < prob <= 1.0:
                    raise ConfigurationError(f"node {node.id!r}: branch probability {prob} not in (0, 1]")
                total += prob
            if abs(total - 1.0) > 1e-12:
                raise ConfigurationError(f"node {node.id!r}: branch probabilities sum to {total}")
        elif node.kind == "loop":
            if node.body is None:
                raise ConfigurationError(f"node {node.id!r}: loop without body")
            known(node.body, "body")
            known(node.exit, "exit")
            lo, hi = node.iterations
            if not 0 <= lo <= hi:
                raise ConfigurationError(f"node {node.id!r}: bad iteration range {node.iterations}")
        else:
            raise ConfigurationError(f"node {node.id!r}: unknown kind {node.kind!r}")

    def _check_paths(self, nodes):
        # every path must end: no cycle through next/target/body/exit edges
        state = {}

        def successors(node):
            if node.kind == "linear":
                return [node.next]
            if node.kind == "branch":
                return [t for t, _ in node.targets]
            return [node.body, node.exit]

        def visit(nid):
            if state.get(nid) == "done":
                return
            if state.get(nid) == "active":
                raise ConfigurationError(f"graph has a cycle through {nid!r}; use a loop node instead")
            state[nid] = "active"
            for succ in successors(nodes[nid]):
                if succ is not None:
                    visit(succ)
            state[nid] = "done"

        visit(self.entry)

    def chunk_ids(self) -> list[str]:
        return list(self.nodes)

    def to_dict(self) -> dict:
        out = []
        for node in self.nodes.values():
            item = {"id": node.id, "kind": node.kind}
            if node.kind == "linear":
                item["next"] = node.next
            elif node.kind == "branch":
                item["targets"] = {t: p for t, p in node.targets}
            else:
                item.update(body=node.body, exit=node.exit, iterations=list(node.iterations))
            out.append(item)
        return {"format": GRAPH_FORMAT, "version": GRAPH_VERSION, "entry": self.entry, "nodes": out}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProgramGraph":
        if data.get("format") != GRAPH_FORMAT or data.get("version") != GRAPH_VERSION:
            raise ConfigurationError(f"expected format {GRAPH_FORMAT!r} version {GRAPH_VERSION}")
        nodes = {}
        try:
            for item in data["nodes"]:
                nid = str(item["id"])
                kind = item.get("kind", "linear")
                if kind == "branch":
                    targets = tuple((str(t), float(p)) for t, p in item["targets"].items())
                    nodes[nid] = Node(nid, kind, targets=targets)
                elif kind == "loop":
                    lo, hi = item.get("iterations", (1, 1))
                    exit_ = item.get("exit")
                    nodes[nid] = Node(
                        nid,
                        kind,
                        body=str(item["body"]),
                        exit=None if exit_ is None else str(exit_),
                        iterations=(int(lo), int(hi)),
                    )
                else:
                    nxt = item.get("next")
                    nodes[nid] = Node(nid, kind, next=None if nxt is None else str(nxt))
            return cls(nodes, str(data["entry"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"malformed graph definition: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ProgramGraph":
        return cls.from_dict(json.loads(text))


def _graph(entry, *nodes):
    return ProgramGraph({n.id: n for n in nodes}, entry)


def builtin_graphs() -> dict[str, ProgramGraph]:
    return {
        # 1 -> if -> 2 | 3
        "fig1-if": _graph(
            "1",
            Node("1", "branch", targets=(("2", 0.5), ("3", 0.5))),
            Node("2"),
            Node("3"),
        ),
        # 1; while (...) { 2 } 3
        "fig2-loop": _graph(
            "1",
            Node("1", "loop", body="2", exit="3", iterations=(1, 100)),
            Node("2"),
            Node("3"),
        ),
        # 1; if (...) { 2; while (...) { 3 } } 4
        "fig3-flowchart": _graph(
            "1",
            Node("1", "branch", targets=(("2", 0.5), ("4", 0.5))),
            Node("2", "loop", body="3", exit="4", iterations=(1, 100)),
            Node("3"),
            Node("4"),
        ),
    }


def get_graph(name: str) -> ProgramGraph:
    graphs = builtin_graphs()
    if name not in graphs:
        raise ConfigurationError(f"unknown graph {name!r}; builtin graphs: {sorted(graphs)}")
    return graphs[name]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and the stream key ``stream``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=stream)))


class _Crash(Exception):
    def __init__(self, chunk):
        self.chunk = chunk


def simulate_run(
    graph: ProgramGraph,
    debug_counts: Mapping[str, int],
    p: float,
    alpha: float,
    rng: np.random.Generator,
    run_id: str = "run",
    trigger_prob: float = 1.0,
) -> RunRecord:
    """Walk ``graph`` once with freshly sampled bugs.

    Each chunk is buggy for this run with probability ``p * alpha**r`` where
    ``r`` is its debug count. A buggy chunk fails on each visit with
    probability ``trigger_prob`` (default: on its first visit); the failure
    ends the run with that chunk reported as buggy.
    """
    ids = graph.chunk_ids()
    probs = np.array([p * alpha ** debug_counts.get(c, 0) for c in ids])
    buggy = {c for c, flag in zip(ids, rng.random(len(ids)) < probs) if flag}
    visits: list[str] = []

    def visit(nid):
        visits.append(nid)
        if nid in buggy and (trigger_prob >= 1.0 or rng.random() < trigger_prob):
            raise _Crash(nid)

    def walk(nid):
        while nid is not None:
            node = graph.nodes[nid]
            visit(nid)
            if node.kind == "linear":
                nid = node.next
            elif node.kind == "branch":
                targets = [t for t, _ in node.targets]
                weights = np.array([w for _, w in node.targets])
                nid = targets[rng.choice(len(targets), p=weights / weights.sum())]
            else:
                lo, hi = node.iterations
                for _ in range(int(rng.integers(lo, hi + 1))):
                    walk(node.body)
                nid = node.exit

    try:
        walk(graph.entry)
    except _Crash as crash:
        return RunRecord.bug(run_id, visits, [crash.chunk], removed=True)
    return RunRecord.ok(run_id, visits)


@dataclass(frozen=True)
class ExperimentConfig:
    p_true: float
    alpha: float
    runs_per_session: int
    replications: int = 1
    seed: int = 0
    trigger_prob: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p_true <= 1.0:
            raise ConfigurationError(f"p must lie in [0, 1], got {self.p_true}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.runs_per_session < 0 or self.replications < 1:
            raise ConfigurationError("runs_per_session must be >= 0 and replications >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if not 0.0 < self.trigger_prob <= 1.0:
            raise ConfigurationError("trigger_prob must lie in (0, 1]")


def run_session(
    graph: ProgramGraph, config: ExperimentConfig, stream: Sequence[int] = (0,)
) -> tuple[list[RunRecord], SessionState]:
    rng = make_rng(config.seed, *stream)
    params = ModelParams(config.alpha)
    state = SessionState()
    records = []
    for r in range(config.runs_per_session):
        record = simulate_run(
            graph, state.debug_counts, config.p_true, config.alpha, rng, f"run-{r + 1}", config.trigger_prob
        )
        record = RunRecord(record.run_id, record.visits, record.bugs, record.removed, seq=r + 1)
        state = process_run(state, record, params)
        records.append(record)
    return records, state


@dataclass(frozen=True)
class CellResult:
    p: float
    alpha: float
    mean: float
    variance: float
    estimates: int
    skipped: int
    boundary: int
    flagged: bool = False
    p_hats: tuple[float, ...] = field(default=(), repr=False)


def run_cell(
    graph: ProgramGraph,
    p: float,
    alpha: float,
    runs_per_session: int,
    replications: int,
    seed: int,
    cell: int = 0,
    solver: SolverConfig = SolverConfig(),
) -> CellResult:
    config = ExperimentConfig(p, alpha, runs_per_session, replications, seed)
    params = ModelParams(alpha)
    p_hats, skipped, boundary = [], 0, 0
    for rep in range(replications):
        _, state = run_session(graph, config, stream=(cell, rep))
        estimate = estimate_mle(extract_statistics(state), params, solver)
        if estimate.status == UNDEFINED:
            skipped += 1
            continue
        if estimate.status in (BOUNDARY_LOW, BOUNDARY_HIGH):
            boundary += 1
        p_hats.append(estimate.p_hat)
    values = np.array(p_hats)
    mean = float(values.mean()) if len(values) else math.nan
    variance = float(values.var(ddof=1)) if len(values) > 1 else math.nan
    return CellResult(p, alpha, mean, variance, len(values), skipped, boundary, not len(values), tuple(p_hats))


def experiment_grid(
    graph: ProgramGraph,
    p_values: Sequence[float],
    alpha_values: Sequence[float],
    runs_per_session: int,
    replications: int,
    seed: int,
) -> list[CellResult]:
    """Mean and sample variance of the MLE for every ``(p, alpha)`` pair.

    Sessions whose MLE is undefined (no bug seen) are skipped and counted;
    a cell with no usable estimate is flagged instead of raising.
    """
    results = []
    for cell, (p, alpha) in enumerate((p, a) for p in p_values for a in alpha_values):
        results.append(run_cell(graph, p, alpha, runs_per_session, replications, seed, cell))
    return results


def loglik_curve(stats, alpha: float, points: int = 999) -> tuple[np.ndarray, np.ndarray]:
    """Log-likelihood on the grid ``j / (points + 1)``, ``j = 1..points``."""
    grid = np.arange(1, points + 1) / (points + 1)
    params = ModelParams(alpha)
    values = np.array([log_likelihood(stats, params, float(p)) for p in grid])
    return grid, values


@dataclass(frozen=True)
class IndependenceResult:
    joint: float
    product: float
    standard_error: float


def independence_mc(p_bug: float, p_trigger: float, trials: int, seed: int = 0) -> IndependenceResult:
    """Monte Carlo check that bug encounters in two chunks are independent.

    Programmer events ``A1, A2`` (a chunk holds a bug) and user events
    ``B1, B2`` (the input triggers it) come from two separate streams, i.e.
    the product of the two probability spaces. ``Ci = Ai and Bi``.
    """
    programmer = make_rng(seed, 0)
    user = make_rng(seed, 1)
    a = programmer.random((trials, 2)) < p_bug
    b = user.random((trials, 2)) < p_trigger
    c = a & b
    joint = float(np.mean(c[:, 0] & c[:, 1]))
    product = float(np.mean(c[:, 0]) * np.mean(c[:, 1]))
    se = math.sqrt(joint * (1.0 - joint) / trials)
    return IndependenceResult(joint, product, se)
