"""Debugging-run records and the session bookkeeping that turns them into statistics."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import MalformedRecordError, MissingLineCountError
from .model import ModelParams, PerLineStats, SufficientStats


@dataclass(frozen=True)
class RunRecord:
    """One program run: visited chunks in execution order and its outcome.

    ``bugs`` is empty for a successful run. Otherwise it holds the chunk(s)
    the programmer corrected (or, with ``removed=False``, located but left
    in place).
    """

    run_id: str
    visits: tuple[str, ...]
    bugs: frozenset[str] = frozenset()
    removed: bool = True
    seq: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(str(v) for v in self.visits))
        object.__setattr__(self, "bugs", frozenset(str(b) for b in self.bugs))
        if not self.visits:
            raise MalformedRecordError(f"run {self.run_id!r}: no visited chunks")
        missing = self.bugs.difference(self.visits)
        if missing:
            raise MalformedRecordError(
                f"run {self.run_id!r}: buggy chunk(s) {sorted(missing)} not among visits"
            )

    @property
    def success(self) -> bool:
        return not self.bugs

    @classmethod
    def ok(cls, run_id, visits, seq=None) -> "RunRecord":
        return cls(str(run_id), tuple(visits), seq=seq)

    @classmethod
    def bug(cls, run_id, visits, bugs, removed=True, seq=None) -> "RunRecord":
        if isinstance(bugs, str):
            bugs = [bugs]
        return cls(str(run_id), tuple(visits), frozenset(bugs), removed, seq)


def truncate(record: RunRecord) -> list[str]:
    """Drop everything after the first visit to any buggy chunk."""
    if record.success:
        return list(record.visits)
    for pos, chunk in enumerate(record.visits):
        if chunk in record.bugs:
            return list(record.visits[: pos + 1])
    raise MalformedRecordError(f"run {record.run_id!r}: no buggy chunk among visits")


def _dedupe(chunks: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(chunks))


@dataclass(frozen=True)
class SessionState:
    debug_counts: Mapping[str, int] = field(default_factory=dict)
    stats: SufficientStats = field(default_factory=SufficientStats)
    per_line_stats: PerLineStats = field(default_factory=PerLineStats)
    class_stats: Mapping[str, SufficientStats] = field(default_factory=dict)
    processed_runs: int = 0
    last_seq: int | None = None
    removed_bug_events: int = 0
    unremoved_bug_events: int = 0


def _bump(n: Mapping[int, int], i: int) -> dict[int, int]:
    out = dict(n)
    out[i] = out.get(i, 0) + 1
    return out


def process_run(
    state: SessionState,
    record: RunRecord,
    params: ModelParams = ModelParams(),
    chunk_db=None,
) -> SessionState:
    """Fold one run into the session and return the new state.

    Perfect traversals are counted once per chunk per run at the chunk's
    debug count before this run. Every reported buggy chunk adds one to
    ``m``; only removed bugs advance the chunk's debug count.
    """
    if record.seq is not None and state.last_seq is not None and record.seq <= state.last_seq:
        raise MalformedRecordError(
            f"run {record.run_id!r}: sequence {record.seq} does not follow {state.last_seq}"
        )
    kept = _dedupe(truncate(record))

    line_counts: Mapping[str, int] = {}
    classes: Mapping[str, str | None] = {}
    if chunk_db is not None:
        line_counts = chunk_db.line_counts()
        classes = chunk_db.class_labels()
    if params.variant in ("per_line", "per_class"):
        if chunk_db is None:
            raise MissingLineCountError(f"variant {params.variant} requires a chunk database")
        unknown = [c for c in _dedupe(record.visits) if c not in line_counts]
        if unknown:
            raise MissingLineCountError(f"run {record.run_id!r}: unknown chunk(s) {unknown}")

    counts = dict(state.debug_counts)
    n = dict(state.stats.n)
    successes = list(state.per_line_stats.successes)
    class_n = {label: dict(s.n) for label, s in state.class_stats.items()}
    class_m = {label: s.m for label, s in state.class_stats.items()}

    for chunk in kept:
        if chunk in record.bugs:
            continue
        i = counts.get(chunk, 0)
        counts.setdefault(chunk, 0)
        n = _bump(n, i)
        if params.variant == "per_line":
            successes.append((i, line_counts[chunk]))
        label = classes.get(chunk)
        class_n[label] = _bump(class_n.get(label, {}), i)

    bugs = sorted(record.bugs)
    for chunk in bugs:
        counts.setdefault(chunk, 0)
        label = classes.get(chunk)
        class_m[label] = class_m.get(label, 0) + 1
        if record.removed:
            counts[chunk] += 1
    # chunks visited only past the truncation point still get an entry
    for chunk in record.visits:
        counts.setdefault(chunk, 0)

    m = state.stats.m + len(bugs)
    labels = set(class_n) | set(class_m)
    return replace(
        state,
        debug_counts=counts,
        stats=SufficientStats(m, n),
        per_line_stats=PerLineStats(m, tuple(successes)),
        class_stats={
            label: SufficientStats(class_m.get(label, 0), class_n.get(label, {}))
            for label in sorted(labels, key=lambda x: (x is None, x or ""))
        },
        processed_runs=state.processed_runs + 1,
        last_seq=record.seq if record.seq is not None else state.last_seq,
        removed_bug_events=state.removed_bug_events + (len(bugs) if record.removed else 0),
        unremoved_bug_events=state.unremoved_bug_events + (0 if record.removed else len(bugs)),
    )


def replay(
    records: Sequence[RunRecord],
    params: ModelParams = ModelParams(),
    chunk_db=None,
    state: SessionState | None = None,
) -> SessionState:
    state = state if state is not None else SessionState()
    for record in records:
        state = process_run(state, record, params, chunk_db)
    return state


def extract_statistics(state: SessionState) -> SufficientStats:
    return SufficientStats(state.stats.m, state.stats.n)


def statistics_for(state: SessionState, params: ModelParams):
    """Statistics object matching ``params.variant``, ready for the estimator."""
    if params.variant == "per_line":
        return state.per_line_stats
    if params.variant == "per_class":
        return dict(state.class_stats)
    return extract_statistics(state)


def traversal_events(records: Iterable[RunRecord]) -> Counter:
    """Count deduplicated traversals surviving truncation, across runs."""
    total = Counter()
    for record in records:
        for chunk in _dedupe(truncate(record)):
            total["bug" if chunk in record.bugs else "ok"] += 1
    return total


# --- line-delimited JSON wire format ----------------------------------------

RECORDS_FORMAT = "resid-records"
RECORDS_VERSION = 1


def records_header() -> str:
    return json.dumps({"format": RECORDS_FORMAT, "version": RECORDS_VERSION})


def record_to_dict(record: RunRecord) -> dict:
    out = {}
    if record.seq is not None:
        out["seq"] = record.seq
    out["run_id"] = record.run_id
    out["visits"] = list(record.visits)
    if record.success:
        out["outcome"] = "ok"
    else:
        out["outcome"] = {"bugs": sorted(record.bugs), "removed": record.removed}
    return out


def record_to_json(record: RunRecord) -> str:
    return json.dumps(record_to_dict(record), separators=(",", ":"))


def record_from_dict(data) -> RunRecord:
    """Build a record from ``{"seq", "run_id", "visits", "outcome"}``.

    ``outcome`` is ``"ok"`` or ``{"bugs": [...], "removed": bool}``;
    ``removed`` defaults to true and ``seq`` is optional.
    """
    if not isinstance(data, dict):
        raise MalformedRecordError(f"record must be a JSON object, got {type(data).__name__}")
    unknown = set(data) - {"seq", "run_id", "visits", "outcome"}
    if unknown:
        raise MalformedRecordError(f"unknown record field(s) {sorted(unknown)}")
    run_id = data.get("run_id")
    visits = data.get("visits")
    outcome = data.get("outcome")
    seq = data.get("seq")
    if not isinstance(run_id, (str, int)) or isinstance(run_id, bool):
        raise MalformedRecordError("record needs a string 'run_id'")
    if not isinstance(visits, list) or not all(isinstance(v, (str, int)) for v in visits):
        raise MalformedRecordError(f"run {run_id!r}: 'visits' must be a list of chunk ids")
    if seq is not None and (not isinstance(seq, int) or isinstance(seq, bool) or seq < 1):
        raise MalformedRecordError(f"run {run_id!r}: 'seq' must be a positive integer")
    if outcome == "ok":
        return RunRecord(str(run_id), tuple(visits), seq=seq)
    if isinstance(outcome, dict):
        bugs = outcome.get("bugs")
        removed = outcome.get("removed", True)
        if set(outcome) - {"bugs", "removed"}:
            raise MalformedRecordError(f"run {run_id!r}: unknown outcome field(s)")
        if not isinstance(bugs, list) or not bugs:
            raise MalformedRecordError(f"run {run_id!r}: outcome needs a non-empty 'bugs' list")
        if not isinstance(removed, bool):
            raise MalformedRecordError(f"run {run_id!r}: 'removed' must be true or false")
        return RunRecord(str(run_id), tuple(visits), frozenset(map(str, bugs)), removed, seq)
    raise MalformedRecordError(f"run {run_id!r}: outcome must be \"ok\" or an object with 'bugs'")


def parse_records(text: str) -> list[RunRecord]:
    """Parse line-delimited records; blank lines and a format header line are skipped."""
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(f"line {number}: invalid JSON ({exc.msg})") from None
        if isinstance(data, dict) and "format" in data:
            if data.get("format") != RECORDS_FORMAT or data.get("version") != RECORDS_VERSION:
                raise MalformedRecordError(f"line {number}: unsupported records format {data}")
            continue
        records.append(record_from_dict(data))
    return records
