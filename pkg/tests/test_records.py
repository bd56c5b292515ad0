import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import WORKED_RUNS
from resid.errors import MalformedRecordError, MissingLineCountError
from resid.model import ModelParams, PerLineStats, SufficientStats
from resid.records import (
    RunRecord,
    SessionState,
    parse_records,
    process_run,
    record_from_dict,
    record_to_json,
    records_header,
    replay,
    statistics_for,
    traversal_events,
    truncate,
)


class TestTruncate:
    def test_success_keeps_everything(self):
        assert truncate(RunRecord.ok("r", ["a", "b", "a", "c"])) == ["a", "b", "a", "c"]

    def test_cut_at_first_buggy_visit(self):
        assert truncate(RunRecord.bug("r", ["a", "b", "c", "b", "d"], "b")) == ["a", "b"]

    def test_cut_at_earliest_of_several_bugs(self):
        assert truncate(RunRecord.bug("r", ["a", "c", "b", "c"], ["b", "c"])) == ["a", "c"]


class TestRecordValidation:
    def test_empty_visits(self):
        with pytest.raises(MalformedRecordError):
            RunRecord.ok("r", [])

    def test_bug_outside_visits(self):
        with pytest.raises(MalformedRecordError, match="not among visits"):
            RunRecord.bug("r", ["a"], "b")

    def test_success_flag(self):
        assert RunRecord.ok("r", ["a"]).success
        assert not RunRecord.bug("r", ["a"], "a").success


def test_worked_session(worked_runs):
    state = replay(worked_runs)
    assert state.stats == SufficientStats(4, {0: 1, 1: 2, 2: 1})
    assert state.debug_counts == {"1": 2, "2": 1, "3": 1}
    assert state.processed_runs == 5
    assert state.removed_bug_events == 4


def test_worked_session_step_by_step(worked_runs):
    expected = [
        (1, {}, {"1": 1}),
        (2, {1: 1}, {"1": 1, "2": 1}),
        (2, {0: 1, 1: 2}, {"1": 1, "2": 1, "3": 0}),
        (3, {0: 1, 1: 2}, {"1": 2, "2": 1, "3": 0}),
        (4, {0: 1, 1: 2, 2: 1}, {"1": 2, "2": 1, "3": 1}),
    ]
    state = SessionState()
    for record, (m, n, counts) in zip(worked_runs, expected):
        state = process_run(state, record)
        assert state.stats == SufficientStats(m, n)
        assert state.debug_counts == counts


def test_revisits_counted_once_per_run():
    state = replay([RunRecord.ok("r", ["a", "b", "a", "b", "a"])])
    assert state.stats.n == {0: 2}


def test_successes_use_count_before_run():
    # the chunk is fixed in run 1; run 2 traverses it cleanly at count 1
    state = replay([RunRecord.bug("1", ["a"], "a"), RunRecord.ok("2", ["a"])])
    assert state.stats == SufficientStats(1, {1: 1})


def test_not_removed_bug_keeps_debug_count():
    state = replay([RunRecord.bug("1", ["a", "b"], "b", removed=False), RunRecord.ok("2", ["b"])])
    assert state.stats == SufficientStats(1, {0: 2})
    assert state.debug_counts == {"a": 0, "b": 0}
    assert state.unremoved_bug_events == 1
    assert state.removed_bug_events == 0


def test_multi_chunk_bug():
    state = replay([RunRecord.bug("1", ["a", "b", "c", "d"], ["b", "c"])])
    # truncation stops at b, so c is neither a success nor visited-before-bug
    assert state.stats == SufficientStats(2, {0: 1})
    assert state.debug_counts == {"a": 0, "b": 1, "c": 1, "d": 0}


def test_chunks_past_truncation_are_registered():
    state = replay([RunRecord.bug("1", ["a", "b", "c"], "a")])
    assert state.debug_counts == {"a": 1, "b": 0, "c": 0}
    assert state.stats == SufficientStats(1)


def test_sequence_must_increase():
    state = process_run(SessionState(), RunRecord.ok("1", ["a"], seq=1))
    with pytest.raises(MalformedRecordError):
        process_run(state, RunRecord.ok("2", ["a"], seq=1))
    assert process_run(state, RunRecord.ok("2", ["a"], seq=2)).last_seq == 2


def test_per_line_requires_chunk_db():
    with pytest.raises(MissingLineCountError):
        process_run(SessionState(), RunRecord.ok("1", ["a"]), ModelParams(variant="per_line"))


class FakeDb:
    def __init__(self, lines, labels=None):
        self._lines = lines
        self._labels = labels or {}

    def line_counts(self):
        return dict(self._lines)

    def class_labels(self):
        return {c: self._labels.get(c) for c in self._lines}


def test_per_line_statistics():
    db = FakeDb({"a": 3, "b": 5})
    params = ModelParams(variant="per_line")
    state = replay([RunRecord.ok("1", ["a", "b"]), RunRecord.bug("2", ["a", "b"], "b")], params, db)
    assert statistics_for(state, params) == PerLineStats(1, ((0, 3), (0, 5), (0, 3)))


def test_per_line_unknown_chunk():
    with pytest.raises(MissingLineCountError):
        replay([RunRecord.ok("1", ["zz"])], ModelParams(variant="per_line"), FakeDb({"a": 1}))


def test_per_class_statistics():
    db = FakeDb({"a": 1, "b": 1, "c": 1}, {"a": "io", "b": "io", "c": "math"})
    params = ModelParams(0.9, "per_class", {"io": 0.5})
    runs = [RunRecord.bug("1", ["a", "c"], "c"), RunRecord.ok("2", ["a", "b", "c"])]
    stats = statistics_for(replay(runs, params, db), params)
    assert stats == {"io": SufficientStats(0, {0: 3}), "math": SufficientStats(1, {1: 1})}


runs_strategy = st.lists(
    st.tuples(
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=12),
        st.integers(0, 12),
        st.booleans(),
        st.booleans(),
    ),
    min_size=1,
    max_size=25,
)


def build_runs(raw):
    runs = []
    for j, (visits, pick, buggy, removed) in enumerate(raw):
        if buggy:
            runs.append(RunRecord.bug(str(j), visits, visits[pick % len(visits)], removed))
        else:
            runs.append(RunRecord.ok(str(j), visits))
    return runs


@settings(max_examples=200, deadline=None)
@given(runs_strategy)
def test_event_conservation(raw):
    runs = build_runs(raw)
    state = replay(runs)
    events = traversal_events(runs)
    assert state.stats.m == events["bug"] == sum(not r.success for r in runs)
    assert state.stats.total_successes == events["ok"]
    assert sum(state.debug_counts.values()) == sum(1 for r in runs if r.bugs and r.removed)
    assert set(state.debug_counts) == {c for r in runs for c in r.visits}


@settings(max_examples=100, deadline=None)
@given(runs_strategy, st.randoms(use_true_random=False))
def test_success_runs_commute(raw, rnd):
    # with only successful runs no debug count moves, so order is irrelevant
    runs = [RunRecord.ok(str(j), v) for j, (v, *_rest) in enumerate(raw)]
    shuffled = list(runs)
    rnd.shuffle(shuffled)
    assert replay(runs).stats == replay(shuffled).stats


class TestWireFormat:
    def test_round_trip(self):
        for record in WORKED_RUNS + [RunRecord.bug("x", ["a", "b"], ["a", "b"], False, seq=9)]:
            assert record_from_dict(json.loads(record_to_json(record))) == record

    def test_compact_encoding(self):
        assert record_to_json(RunRecord.ok("3", ["1", "3"], seq=3)) == (
            '{"seq":3,"run_id":"3","visits":["1","3"],"outcome":"ok"}'
        )

    def test_parse_with_header_and_blanks(self):
        text = "\n".join([records_header(), ""] + [record_to_json(r) for r in WORKED_RUNS]) + "\n"
        assert parse_records(text) == WORKED_RUNS

    def test_removed_defaults_true(self):
        rec = record_from_dict({"run_id": "r", "visits": ["a"], "outcome": {"bugs": ["a"]}})
        assert rec.removed

    @pytest.mark.parametrize(
        "data",
        [
            [],
            {"run_id": "r", "visits": ["a"]},
            {"run_id": "r", "visits": "a", "outcome": "ok"},
            {"run_id": "r", "visits": ["a"], "outcome": "fail"},
            {"run_id": "r", "visits": ["a"], "outcome": {"bugs": []}},
            {"run_id": "r", "visits": ["a"], "outcome": {"bugs": ["a"], "removed": "yes"}},
            {"run_id": "r", "visits": ["a"], "outcome": {"bugs": ["b"]}},
            {"run_id": "r", "visits": ["a"], "outcome": "ok", "seq": 0},
            {"run_id": "r", "visits": ["a"], "outcome": "ok", "extra": 1},
            {"run_id": True, "visits": ["a"], "outcome": "ok"},
        ],
    )
    def test_rejects_malformed(self, data):
        with pytest.raises(MalformedRecordError):
            record_from_dict(data)

    def test_bad_json_line_number(self):
        with pytest.raises(MalformedRecordError, match="line 2"):
            parse_records(record_to_json(WORKED_RUNS[0]) + "\n{not json\n")

    def test_unsupported_header(self):
        with pytest.raises(MalformedRecordError):
            parse_records('{"format":"resid-records","version":2}\n')
