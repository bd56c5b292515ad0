"""Command-line front end.

Subcommands: ``chunk``, ``session new``, ``ingest``, ``estimate``,
``report`` and ``simulate``. The session directory comes from ``--session``,
else ``$RESID_SESSION``, else ``./.resid-session``.

Exit codes::

    0  success
    1  other error (I/O, configuration, locked session)
    2  command-line usage error
    3  source parse error
    4  malformed, out-of-order or unknown-chunk run record
    5  MLE undefined (no bug observed)
    6  stale chunk database or stale estimate
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

from . import chunker, report
from .errors import (
    ConfigurationError,
    MalformedRecordError,
    MissingLineCountError,
    ParseError,
    ResidError,
    StaleDatabaseError,
)
from .estimator import UNDEFINED, Estimate, SolverConfig, chunk_unreliability, estimate_mle
from .model import ModelParams, likelihood_functions
from .records import (
    RunRecord,
    SessionState,
    parse_records,
    process_run,
    record_to_json,
    records_header,
    replay,
    statistics_for,
    truncate,
)
from .simulator import ProgramGraph, experiment_grid, get_graph, loglik_curve, run_session, ExperimentConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_RECORD = 4
EXIT_UNDEFINED = 5
EXIT_STALE = 6

SESSION_ENV = "RESID_SESSION"
DEFAULT_SESSION = ".resid-session"
SESSION_FORMAT = "resid-session"
ESTIMATE_FORMAT = "resid-estimate"
FORMAT_VERSION = 1

SESSION_FILE = "session.json"
RECORDS_FILE = "records.jsonl"
CHUNK_DB_FILE = "chunks.tsv"
ESTIMATE_FILE = "estimate.json"
LOCK_FILE = ".lock"


class CliError(ResidError):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


# --- session store -----------------------------------------------------------


@dataclass
class Session:
    path: Path
    params: ModelParams
    solver: SolverConfig
    chunk_db: chunker.ChunkDb | None
    records: list[RunRecord]

    @classmethod
    def create(cls, path: Path, params: ModelParams, solver: SolverConfig, chunk_db=None) -> "Session":
        if (path / SESSION_FILE).exists():
            raise CliError(f"session already exists at {path}")
        if params.variant in ("per_line", "per_class") and chunk_db is None:
            raise CliError(f"variant {params.variant} needs --chunk-db")
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "format": SESSION_FORMAT,
            "version": FORMAT_VERSION,
            "alpha": params.alpha,
            "variant": params.variant,
            "class_alphas": dict(params.class_alphas),
            "epsilon": solver.epsilon,
            "tolerance": solver.tolerance,
            "max_iterations": solver.max_iterations,
            "chunk_db_digest": chunk_db.source_digest if chunk_db else None,
        }
        if chunk_db is not None:
            (path / CHUNK_DB_FILE).write_text(chunk_db.to_text(), encoding="utf-8")
        (path / SESSION_FILE).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        (path / RECORDS_FILE).write_text(records_header() + "\n", encoding="utf-8")
        return cls(path, params, solver, chunk_db, [])

    @classmethod
    def open(cls, path: Path) -> "Session":
        meta_file = path / SESSION_FILE
        if not meta_file.exists():
            raise CliError(f"no session at {path}; create one with 'resid session new'")
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        if meta.get("format") != SESSION_FORMAT or meta.get("version") != FORMAT_VERSION:
            raise CliError(f"{meta_file}: unsupported session format")
        params = ModelParams(meta["alpha"], meta["variant"], meta.get("class_alphas") or {})
        solver = SolverConfig(meta["epsilon"], meta["tolerance"], meta["max_iterations"])
        chunk_db = None
        if meta.get("chunk_db_digest"):
            chunk_db = chunker.ChunkDb.from_text((path / CHUNK_DB_FILE).read_text(encoding="utf-8"))
            if chunk_db.source_digest != meta["chunk_db_digest"]:
                raise CliError(f"{path / CHUNK_DB_FILE} does not match the session", EXIT_STALE)
        records = parse_records((path / RECORDS_FILE).read_text(encoding="utf-8"))
        return cls(path, params, solver, chunk_db, records)

    def state(self) -> SessionState:
        return replay(self.records, self.params, self.chunk_db)

    def append(self, new_records: list[RunRecord]) -> None:
        with open(self.path / RECORDS_FILE, "a", encoding="utf-8") as fh:
            for record in new_records:
                fh.write(record_to_json(record) + "\n")
        self.records.extend(new_records)


@contextlib.contextmanager
def session_lock(path: Path):
    lock = path / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"session {path} is locked by another process (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        yield
    finally:
        os.close(fd)
        lock.unlink(missing_ok=True)


def session_path(args) -> Path:
    return Path(args.session or os.environ.get(SESSION_ENV) or DEFAULT_SESSION)


def stats_summary(stats) -> str:
    n = " ".join(f"{i}:{c}" for i, c in stats.n.items())
    return f"m={stats.m} k={stats.k} sum_n={stats.total_successes} n=[{n}]"


# --- estimation shared by estimate/report -------------------------------------


def compute_estimate(session: Session) -> tuple[SessionState, Estimate, float | None]:
    state = session.state()
    stats = statistics_for(state, session.params)
    estimate = estimate_mle(stats, session.params, session.solver)
    loglik = None
    if estimate.status != UNDEFINED:
        loglik_fn, _ = likelihood_functions(stats)
        loglik = loglik_fn(stats, session.params, estimate.p_hat)
    return state, estimate, loglik


def chunk_scores(session: Session, state: SessionState, p_hat: float) -> list[report.ChunkScore]:
    db = session.chunk_db
    ids = list(db.ids()) if db else []
    ids += [c for c in state.debug_counts if c not in set(ids)]
    counts = {c: state.debug_counts.get(c, 0) for c in ids}
    classes = db.class_labels() if db else {}
    scores = chunk_unreliability(p_hat, counts, session.params, classes)
    out = []
    for cid in ids:
        chunk = db.get(cid) if db else None
        out.append(
            report.ChunkScore(
                cid,
                scores[cid],
                counts[cid],
                chunk.file if chunk else None,
                chunk.first_line if chunk else None,
                chunk.last_line if chunk else None,
                chunk.class_label if chunk else None,
            )
        )
    return out


# --- subcommands ---------------------------------------------------------------


def _relative_output(path: str) -> PurePosixPath:
    parts = [p for p in PurePosixPath(path).parts if p not in ("/", "..", ".")]
    return PurePosixPath(*parts)


def cmd_chunk(args) -> int:
    if not args.sources:
        raise CliError("no sources", EXIT_USAGE)
    sources = []
    for name in args.sources:
        path = Path(name)
        try:
            sources.append((PurePosixPath(path.as_posix()).as_posix(), path.read_text(encoding="utf-8")))
        except OSError as exc:
            raise CliError(f"cannot read {name}: {exc.strerror}") from None
    if args.db:
        db = chunker.ChunkDb.from_text(Path(args.db).read_text(encoding="utf-8"))
    else:
        db = chunker.identify_chunks(sources)
        if args.rules:
            rules = chunker.parse_rules(Path(args.rules).read_text(encoding="utf-8"))
            db = chunker.classify_chunks(db, rules)
    instrumented = chunker.instrument(sources, db)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / CHUNK_DB_FILE).write_text(db.to_text(), encoding="utf-8")
        for path, text in instrumented:
            target = out / "src" / _relative_output(path)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}") from None
    print(f"{len(db)} chunks")
    print(f"chunk database: {out / CHUNK_DB_FILE}")
    return EXIT_OK


def _class_alphas(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        label, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--class-alpha expects LABEL=VALUE, got {item!r}", EXIT_USAGE)
        out[label] = float(value)
    return out


def cmd_session_new(args) -> int:
    try:
        params = ModelParams(args.alpha, args.variant, _class_alphas(args.class_alpha))
        solver = SolverConfig(args.epsilon, args.tol, args.max_iter)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    db = None
    if args.chunk_db:
        db = chunker.ChunkDb.from_text(Path(args.chunk_db).read_text(encoding="utf-8"))
    path = session_path(args)
    Session.create(path, params, solver, db)
    print(f"created session {path} (alpha={params.alpha}, variant={params.variant})")
    return EXIT_OK


def _read_input_records(args) -> list[RunRecord]:
    chunks = []
    if args.record:
        chunks.extend(args.record)
    for name in args.files:
        text = sys.stdin.read() if name == "-" else Path(name).read_text(encoding="utf-8")
        chunks.append(text)
    if not chunks:
        raise CliError("nothing to ingest: give a record file, '-' or --record JSON", EXIT_USAGE)
    return parse_records("\n".join(chunks))


def cmd_ingest(args) -> int:
    path = session_path(args)
    session = Session.open(path)
    incoming = _read_input_records(args)
    with session_lock(path):
        state = session.state()
        known = set(session.chunk_db.ids()) if session.chunk_db else None
        accepted = []
        for record in incoming:
            expected = state.processed_runs + 1
            if record.seq is None:
                record = RunRecord(record.run_id, record.visits, record.bugs, record.removed, expected)
            elif record.seq != expected:
                raise MalformedRecordError(
                    f"run {record.run_id!r}: sequence {record.seq} rejected, expected {expected}"
                )
            if known is not None:
                unknown = sorted(set(record.visits) - known)
                if unknown:
                    raise MalformedRecordError(f"run {record.run_id!r}: unknown chunk id(s) {unknown}")
            state = process_run(state, record, session.params, session.chunk_db)
            accepted.append(record)
        # all records validated before anything is written
        session.append(accepted)
    print(f"ingested {len(accepted)} run(s); total {state.processed_runs}")
    print(stats_summary(state.stats))
    return EXIT_OK


def cmd_estimate(args) -> int:
    path = session_path(args)
    session = Session.open(path)
    state, estimate, loglik = compute_estimate(session)
    stats = state.stats
    result = {
        "format": ESTIMATE_FORMAT,
        "version": FORMAT_VERSION,
        "status": estimate.status,
        "p_hat": estimate.p_hat,
        "loglik": loglik,
        "iterations": estimate.iterations,
        "bracket_width": estimate.bracket_width,
        "alpha": session.params.alpha,
        "variant": session.params.variant,
        "m": stats.m,
        "k": stats.k,
        "n": {str(i): c for i, c in stats.n.items()},
        "processed_runs": state.processed_runs,
        "chunks": [],
    }
    if estimate.status != UNDEFINED:
        result["chunks"] = [
            {
                "id": c.id,
                "file": c.file,
                "first_line": c.first_line,
                "last_line": c.last_line,
                "class_label": c.class_label,
                "debug_count": c.debug_count,
                "score": c.score,
            }
            for c in chunk_scores(session, state, estimate.p_hat)
        ]
    with session_lock(path):
        (path / ESTIMATE_FILE).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    if estimate.status == UNDEFINED:
        print("undefined: no bug observed (m=0)")
        print(stats_summary(stats))
        return EXIT_UNDEFINED
    print(f"p_hat: {estimate.p_hat!r}")
    print(f"status: {estimate.status}")
    print(f"loglik: {loglik!r}")
    print(stats_summary(stats))
    return EXIT_OK


def _observed_edges(records) -> list[tuple[str, str]]:
    edges = {}
    for record in records:
        visits = truncate(record)
        for a, b in zip(visits, visits[1:]):
            if a != b:
                edges[(a, b)] = None
    return list(edges)


def cmd_report(args) -> int:
    path = session_path(args)
    session = Session.open(path)
    est_file = path / ESTIMATE_FILE
    if not est_file.exists():
        raise CliError("no estimate yet; run 'resid estimate' first")
    saved = json.loads(est_file.read_text(encoding="utf-8"))
    if saved.get("p_hat") is None:
        raise CliError("no estimate available (MLE undefined); run 'resid estimate' after observing a bug")
    state = session.state()
    if saved.get("processed_runs") != state.processed_runs:
        raise CliError("estimate is out of date; re-run 'resid estimate'", EXIT_STALE)
    p_hat = saved["p_hat"]
    scores = chunk_scores(session, state, p_hat)
    if args.format == "dot":
        text = report.render_dot(scores, _observed_edges(session.records), p_hat)
    else:
        text = report.render_html(scores, p_hat, session.params.alpha)
    target = Path(args.output) if args.output else path / f"report.{args.format}"
    target.write_text(text, encoding="utf-8")
    for c in scores:
        print(f"{c.id}\t{c.score:.6g}\t{report.heat_color(c.score)}")
    print(f"wrote {target}")
    return EXIT_OK


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def cmd_simulate(args) -> int:
    if args.graph_file:
        graph = ProgramGraph.from_json(Path(args.graph_file).read_text(encoding="utf-8"))
        graph_name = args.graph_file
    else:
        graph = get_graph(args.graph)
        graph_name = args.graph
    for value in args.p + args.alpha:
        if not 0.0 <= value <= 1.0:
            raise CliError(f"invalid probability {value}", EXIT_USAGE)
    for value in args.alpha:
        if not 0.0 < value < 1.0:
            raise CliError(f"alpha must lie in (0, 1), got {value}", EXIT_USAGE)
    cells = experiment_grid(graph, args.p, args.alpha, args.runs, args.reps, args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = f"# graph={graph_name} runs={args.runs} reps={args.reps} seed={args.seed}\n"
    columns = ("p", "alpha", "mean", "variance", "estimates", "skipped", "boundary", "flagged")
    lines = ["# resid-experiment v1\n", header, "\t".join(columns) + "\n"]
    for c in cells:
        row = (c.p, c.alpha, c.mean, c.variance, c.estimates, c.skipped, c.boundary, str(c.flagged).lower())
        lines.append("\t".join(_fmt(v) for v in row) + "\n")
    (out / "results.tsv").write_text("".join(lines), encoding="utf-8")

    if args.curve:
        curve = ["# resid-curve v1\n", header, "p_true\talpha\tp\tloglik\n"]
        for cell, c in enumerate(cells):
            config = ExperimentConfig(c.p, c.alpha, args.runs, args.reps, args.seed)
            _, state = run_session(graph, config, stream=(cell, 0))
            grid, values = loglik_curve(state.stats, c.alpha)
            for p, v in zip(grid, values):
                curve.append(f"{_fmt(c.p)}\t{_fmt(c.alpha)}\t{_fmt(float(p))}\t{_fmt(float(v))}\n")
        (out / "curve.tsv").write_text("".join(curve), encoding="utf-8")

    for c in cells:
        flag = "  (no usable estimate)" if c.flagged else ""
        print(
            f"p={c.p:g} alpha={c.alpha:g} mean={c.mean:.4f} var={c.variance:.4f} "
            f"n={c.estimates} skipped={c.skipped}{flag}"
        )
    return EXIT_OK


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resid", description=__doc__.split("\n\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--session", help=f"session directory (default ${SESSION_ENV} or {DEFAULT_SESSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chunk", help="identify chunks and write instrumented sources")
    p.add_argument("sources", nargs="*")
    p.add_argument("--out", required=True, help="output directory (never the source tree)")
    p.add_argument("--rules", help="classification rules: one 'label regex' per line")
    p.add_argument("--db", help="instrument against an existing chunk database")
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("session", help="session management")
    session_sub = p.add_subparsers(dest="session_command", required=True)
    p = session_sub.add_parser("new", parents=[common], help="create a debugging session")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--variant", default="homogeneous", choices=["homogeneous", "per-line", "per-class"])
    p.add_argument("--class-alpha", action="append", metavar="LABEL=VALUE")
    p.add_argument("--chunk-db")
    p.add_argument("--epsilon", type=float, default=SolverConfig.epsilon)
    p.add_argument("--tol", type=float, default=SolverConfig.tolerance)
    p.add_argument("--max-iter", type=int, default=SolverConfig.max_iterations)
    p.set_defaults(func=cmd_session_new)

    p = sub.add_parser("ingest", parents=[common], help="append run records to the session")
    p.add_argument("files", nargs="*", help="record files ('-' for stdin)")
    p.add_argument("--record", action="append", help="a single record as JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", parents=[common], help="compute the MLE of p")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", parents=[common], help="write a chunk heat-map")
    p.add_argument("--format", choices=["dot", "html"], default="html")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="simulate debugging sessions")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--graph", default="fig3-flowchart")
    source.add_argument("--graph-file")
    p.add_argument("--p", type=_floats, default=[0.3, 0.6, 0.9], help="comma-separated true p values")
    p.add_argument("--alpha", type=_floats, default=[0.9], help="comma-separated alpha values")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--curve", action="store_true", help="also write log-likelihood curves")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (MalformedRecordError, MissingLineCountError) as exc:
        print(f"record error: {exc}", file=sys.stderr)
        return EXIT_RECORD
    except StaleDatabaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALE
    except (ConfigurationError, ResidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
