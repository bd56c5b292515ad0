"""Chunk identification and log instrumentation for a small C-like language.

Supported subset: declarations, assignments and calls (one statement per
line), ``if``/``else``, ``while`` and ``for`` with braced bodies, function
definitions, ``return``/``break``/``continue``, ``//`` and ``/* */`` comments,
string and character literals. ``else if`` must be written as
``else { if ... }``. ``switch``, ``goto``, ``do`` and preprocessor lines are
rejected.

A chunk is a maximal run of straight-line statements. The line holding a
branch or loop condition closes the chunk it follows; each arm body, each
loop body, each function body and the code after a join start new chunks.
``return``, ``break`` and ``continue`` also close the current chunk.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import PurePosixPath
from typing import Iterable, Sequence

from .errors import ConfigurationError, ParseError, StaleDatabaseError

LOG_CALL = "RESID_LOG"
DEFAULT_CLASS = "default"
DB_HEADER = "# resid-chunkdb v1"
DB_COLUMNS = ("id", "file", "first_line", "last_line", "line_count", "class_label")

KEYWORDS_BRANCH = {"if", "while", "for"}
KEYWORDS_JUMP = {"return", "break", "continue"}
KEYWORDS_UNSUPPORTED = {"switch", "case", "default", "goto", "do"}

# longest first so that e.g. "<<=" wins over "<<" and "<"
_OPERATORS = sorted(
    """<<= >>= -> ++ -- << >> <= >= == != && || += -= *= /= %= &= |= ^=
    + - * / % & | ^ ~ ! = < > ? : ; , . ( ) { } [ ]""".split(),
    key=len,
    reverse=True,
)
_NUMBER = re.compile(r"(0[xX][0-9a-fA-F]+|(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)[uUlLfF]*")
_IDENT = re.compile(r"[A-Za-z_]\w*")


@dataclass(frozen=True)
class Token:
    kind: str  # ident, number, string, char, op
    text: str
    line: int
    col: int


def tokenize(text: str, path: str = "<source>") -> list[Token]:
    tokens = []
    i, line, line_start = 0, 1, 0
    size = len(text)
    while i < size:
        ch = text[i]
        col = i - line_start + 1
        if ch == "\n":
            i += 1
            line += 1
            line_start = i
        elif ch in " \t\r\f\v":
            i += 1
        elif text.startswith("//", i):
            end = text.find("\n", i)
            i = size if end < 0 else end
        elif text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end < 0:
                raise ParseError("unterminated block comment", path, line, col)
            chunk = text[i : end + 2]
            newlines = chunk.count("\n")
            if newlines:
                line += newlines
                line_start = i + chunk.rfind("\n") + 1
            i = end + 2
        elif ch in "\"'":
            j = i + 1
            while j < size and text[j] != ch:
                if text[j] == "\n":
                    break
                j += 2 if text[j] == "\\" else 1
            if j >= size or text[j] != ch:
                what = "string" if ch == '"' else "character"
                raise ParseError(f"unterminated {what} literal", path, line, col)
            tokens.append(Token("string" if ch == '"' else "char", text[i : j + 1], line, col))
            i = j + 1
        elif ch == "#":
            raise ParseError("preprocessor directives are not supported", path, line, col)
        elif ch.isdigit() or (ch == "." and i + 1 < size and text[i + 1].isdigit()):
            match = _NUMBER.match(text, i)
            tokens.append(Token("number", match.group(), line, col))
            i = match.end()
        elif ch.isalpha() or ch == "_":
            match = _IDENT.match(text, i)
            tokens.append(Token("ident", match.group(), line, col))
            i = match.end()
        else:
            for op in _OPERATORS:
                if text.startswith(op, i):
                    tokens.append(Token("op", op, line, col))
                    i += len(op)
                    break
            else:
                raise ParseError(f"unexpected character {ch!r}", path, line, col)
    return tokens


# --- syntax tree -----------------------------------------------------------


@dataclass
class Simple:
    first_line: int
    last_line: int
    jump: bool = False


@dataclass
class Block:
    body: list


@dataclass
class Branch:
    keyword: str
    first_line: int  # header lines: keyword through closing parenthesis
    last_line: int
    arms: list  # Blocks: one for while/for/if, two for if/else


@dataclass
class Function:
    body: Block


class _Parser:
    def __init__(self, tokens: Sequence[Token], path: str):
        self.tokens = tokens
        self.path = path
        self.pos = 0
        self.log_lines: set[int] = set()
        self._line_heads = {}
        for t in tokens:
            self._line_heads.setdefault(t.line, t)

    def error(self, message, token=None):
        token = token or self.peek()
        if token is None:
            last = self.tokens[-1] if self.tokens else Token("op", "", 1, 1)
            raise ParseError(message + " (at end of file)", self.path, last.line, last.col)
        raise ParseError(message, self.path, token.line, token.col)

    def peek(self, offset=0):
        j = self.pos + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self):
        token = self.peek()
        if token is None:
            self.error("unexpected end of input")
        self.pos += 1
        return token

    def expect(self, text):
        token = self.peek()
        if token is None or token.text != text or token.kind not in ("op", "ident"):
            self.error(f"expected {text!r}" + (f", found {token.text!r}" if token else ""))
        return self.next()

    def at(self, text):
        token = self.peek()
        return token is not None and token.text == text and token.kind in ("op", "ident")

    def require_line_start(self, token):
        if self._line_heads[token.line] is not token:
            self.error("one statement per line: statement must start its own line", token)

    # program := (function | statement)*
    def program(self) -> list:
        items = []
        while self.peek() is not None:
            if self._looks_like_function():
                items.append(self.function())
            else:
                stmt = self.statement()
                if stmt is not None:
                    items.append(stmt)
        return items

    def _looks_like_function(self) -> bool:
        token = self.peek()
        if token.kind != "ident" or token.text in KEYWORDS_BRANCH | KEYWORDS_JUMP:
            return False
        depth, seen_paren, j = 0, False, self.pos
        prev = None
        while j < len(self.tokens):
            t = self.tokens[j]
            if t.text == "(":
                depth += 1
                seen_paren = True
            elif t.text == ")":
                depth -= 1
            elif depth == 0 and t.text == ";":
                return False
            elif depth == 0 and t.text == "{":
                return seen_paren and prev is not None and prev.text == ")" and prev.kind == "op"
            prev = t
            j += 1
        return False

    def function(self) -> Function:
        head = self.peek()
        self.require_line_start(head)
        while not self.at("{"):
            self.next()
        return Function(self.block())

    def block(self) -> Block:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek() is None:
                self.error("unbalanced braces: missing '}'")
            stmt = self.statement()
            if stmt is not None:
                body.append(stmt)
        self.expect("}")
        return Block(body)

    def statement(self):
        token = self.peek()
        if token.text == "}" and token.kind == "op":
            self.error("unbalanced braces: unexpected '}'")
        if token.text == "{" and token.kind == "op":
            return self.block()
        self.require_line_start(token)
        if token.kind == "ident" and token.text in KEYWORDS_UNSUPPORTED:
            self.error(f"unsupported construct {token.text!r}")
        if token.kind == "ident" and token.text == "else":
            self.error("'else' without matching 'if'")
        if token.kind == "ident" and token.text in KEYWORDS_BRANCH:
            return self.branch()
        return self.simple()

    def _condition(self):
        keyword = self.next()
        self.expect("(")
        depth = 1
        while depth:
            t = self.peek()
            if t is None:
                self.error(f"unterminated condition of {keyword.text!r}", keyword)
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
            elif t.text in "{};" and t.kind == "op" and not (keyword.text == "for" and t.text == ";"):
                self.error(f"unexpected {t.text!r} in condition")
            last = self.next()
        if not self.at("{"):
            self.error(f"braces required for the body of {keyword.text!r}")
        return keyword, last

    def branch(self) -> Branch:
        keyword, last = self._condition()
        arms = [self.block()]
        if keyword.text == "if" and self.at("else"):
            self.next()
            if self.at("if"):
                self.error("'else if' is not supported; write 'else { if ... }'")
            if not self.at("{"):
                self.error("braces required for the body of 'else'")
            arms.append(self.block())
        return Branch(keyword.text, keyword.line, last.line, arms)

    def simple(self):
        start = self.pos
        first = self.peek()
        depth = 0
        prev = None
        while True:
            t = self.peek()
            if t is None:
                self.error("missing ';' at end of statement", first)
            if t.kind == "op":
                if t.text in "([":
                    depth += 1
                elif t.text in ")]":
                    depth -= 1
                elif t.text == "{":
                    # only brace initialisers are allowed inside a statement
                    if prev is None or prev.text not in ("=", ",", "{"):
                        self.error("unexpected '{'", t)
                    depth += 1
                elif t.text == "}":
                    if depth == 0:
                        self.error("missing ';' before '}'", t)
                    depth -= 1
                elif t.text == ";" and depth == 0:
                    break
            prev = self.next()
        semi = self.next()
        if _is_log_call(self.tokens[start : self.pos]):
            self.log_lines.add(first.line)
            return None
        jump = first.kind == "ident" and first.text in KEYWORDS_JUMP
        return Simple(first.line, semi.line, jump)


def _is_log_call(tokens: Sequence[Token]) -> bool:
    texts = [t.text for t in tokens]
    return (
        len(texts) == 5
        and texts[0] == LOG_CALL
        and texts[1] == "("
        and tokens[2].kind == "string"
        and texts[3:] == [")", ";"]
    )


def parse(text: str, path: str = "<source>"):
    """Parse ``text`` and return ``(items, log_lines)``."""
    parser = _Parser(tokenize(text, path), path)
    items = parser.program()
    return items, parser.log_lines


# --- chunks ----------------------------------------------------------------


@dataclass(frozen=True)
class Chunk:
    id: str
    file: str
    first_line: int
    last_line: int
    line_count: int
    class_label: str | None = None
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class ChunkDb:
    chunks: tuple[Chunk, ...] = ()
    source_digest: str = ""

    def __len__(self):
        return len(self.chunks)

    def __iter__(self):
        return iter(self.chunks)

    def ids(self) -> list[str]:
        return [c.id for c in self.chunks]

    def get(self, chunk_id: str) -> Chunk | None:
        for c in self.chunks:
            if c.id == chunk_id:
                return c
        return None

    def line_counts(self) -> dict[str, int]:
        return {c.id: c.line_count for c in self.chunks}

    def class_labels(self) -> dict[str, str | None]:
        return {c.id: c.class_label for c in self.chunks}

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"{DB_HEADER}\n# source_digest: {self.source_digest}\n")
        writer = csv.writer(out, delimiter="\t", lineterminator="\n")
        writer.writerow(DB_COLUMNS)
        for c in self.chunks:
            writer.writerow(
                [c.id, c.file, c.first_line, c.last_line, c.line_count, c.class_label or ""]
            )
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ChunkDb":
        lines = text.splitlines()
        if not lines or lines[0].strip() != DB_HEADER:
            raise ConfigurationError(f"not a chunk database (expected header {DB_HEADER!r})")
        digest = ""
        body = []
        for line in lines[1:]:
            if line.startswith("# source_digest:"):
                digest = line.split(":", 1)[1].strip()
            elif not line.startswith("#"):
                body.append(line)
        reader = csv.reader(body, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != DB_COLUMNS:
            raise ConfigurationError("chunk database has an unexpected column header")
        chunks = []
        for row in reader:
            cid, path, first, last, count, label = row
            chunks.append(Chunk(cid, path, int(first), int(last), int(count), label or None))
        return cls(tuple(chunks), digest)


def source_digest(source_files: Iterable[tuple[str, str]]) -> str:
    h = hashlib.sha256()
    for path, text in sorted((str(p), t) for p, t in source_files):
        h.update(path.encode("utf-8") + b"\0" + text.encode("utf-8") + b"\0")
    return "sha256:" + h.hexdigest()


def _collect(items, path) -> list[list]:
    """Group statements into chunks; each chunk is a list of (first, last) line spans."""
    chunks: list[list] = []

    def walk(stmts, current):
        for stmt in stmts:
            if isinstance(stmt, Simple):
                if current is None:
                    current = []
                    chunks.append(current)
                current.append((stmt.first_line, stmt.last_line))
                if stmt.jump:
                    current = None
            elif isinstance(stmt, Block):
                current = walk(stmt.body, current)
            elif isinstance(stmt, Branch):
                if current is None:
                    current = []
                    chunks.append(current)
                current.append((stmt.first_line, stmt.last_line))
                for arm in stmt.arms:
                    walk(arm.body, None)
                current = None
            elif isinstance(stmt, Function):
                walk(stmt.body.body, None)
                current = None
        return current

    walk(items, None)
    return chunks


def _chunk_ids(paths: Sequence[str]) -> dict[str, str]:
    stems = [PurePosixPath(p).stem for p in paths]
    prefixes = {}
    for path, stem in zip(paths, stems):
        if stems.count(stem) > 1:
            prefixes[path] = str(PurePosixPath(path).with_suffix(""))
        else:
            prefixes[path] = stem
    return prefixes


def identify_chunks(source_files: Iterable[tuple[str, str]]) -> ChunkDb:
    files = sorted((str(p), t) for p, t in source_files)
    prefixes = _chunk_ids([p for p, _ in files])
    chunks = []
    for path, text in files:
        items, log_lines = parse(text, path)
        lines = text.splitlines()
        for ordinal, spans in enumerate(_collect(items, path), start=1):
            first = spans[0][0]
            last = spans[-1][1]
            counted = [
                lines[n - 1]
                for n in range(first, last + 1)
                if lines[n - 1].strip() and n not in log_lines
            ]
            chunks.append(
                Chunk(
                    id=f"{prefixes[path]}:{ordinal}",
                    file=path,
                    first_line=first,
                    last_line=last,
                    line_count=len(counted),
                    text="\n".join(counted),
                )
            )
    return ChunkDb(tuple(chunks), source_digest(files))


def instrument(source_files: Iterable[tuple[str, str]], db: ChunkDb) -> list[tuple[str, str]]:
    """Insert ``RESID_LOG("<id>");`` on its own line before each chunk."""
    files = sorted((str(p), t) for p, t in source_files)
    if source_digest(files) != db.source_digest:
        raise StaleDatabaseError("chunk database does not match the given sources; re-run chunking")
    starts: dict[str, dict[int, str]] = {}
    for c in db.chunks:
        starts.setdefault(c.file, {})[c.first_line] = c.id
    out = []
    for path, text in files:
        wanted = starts.get(path, {})
        result = []
        for number, line in enumerate(text.splitlines(keepends=True), start=1):
            if number in wanted:
                indent = line[: len(line) - len(line.lstrip(" \t"))]
                result.append(f'{indent}{LOG_CALL}("{wanted[number]}");\n')
            result.append(line)
        out.append((path, "".join(result)))
    return out


def parse_rules(text: str) -> list[tuple[str, str]]:
    """Read classification rules, one ``label<whitespace>regex`` per line."""
    rules = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ConfigurationError(f"rules line {number}: expected 'label pattern'")
        label, pattern = parts
        rules.append((pattern, label))
    return rules


def classify_chunks(db: ChunkDb, rules: Sequence[tuple[str, str]], default: str = DEFAULT_CLASS) -> ChunkDb:
    """Label each chunk with the first rule whose pattern matches its text."""
    compiled = []
    for pattern, label in rules:
        try:
            compiled.append((re.compile(pattern, re.MULTILINE), label))
        except re.error as exc:
            raise ConfigurationError(f"invalid pattern {pattern!r}: {exc}") from None
    labelled = []
    for chunk in db.chunks:
        label = next((lab for rx, lab in compiled if rx.search(chunk.text)), default)
        labelled.append(replace(chunk, class_label=label))
    return replace(db, chunks=tuple(labelled))
