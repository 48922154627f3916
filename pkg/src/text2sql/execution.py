"""Read-only SQL execution with timeout, outcome classification, and row normalization."""

from __future__ import annotations

import sqlite3
import threading
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

DEFAULT_TIMEOUT = 30.0
NUMERIC_REL_TOLERANCE = 1e-6


class ExecStatus(str, Enum):
    OK = "OK"
    SYNTAX_ERROR = "SYNTAX_ERROR"
    SCHEMA_ERROR = "SCHEMA_ERROR"
    EMPTY_RESULT = "EMPTY_RESULT"
    TIMEOUT = "TIMEOUT"
    OTHER_ERROR = "OTHER_ERROR"


@dataclass(frozen=True)
class ExecutionOutcome:
    status: ExecStatus
    rows: Optional[tuple] = None
    error_message: str = ""
    exception_class: str = ""
    elapsed: float = 0.0

    def __post_init__(self):
        has_rows = self.rows is not None
        if has_rows != (self.status in (ExecStatus.OK, ExecStatus.EMPTY_RESULT)):
            raise ValueError(f"rows present does not match status {self.status}")
        if self.status is ExecStatus.EMPTY_RESULT and self.rows:
            raise ValueError("EMPTY_RESULT outcome carries rows")


_SCHEMA_ERROR_MARKS = ("no such table", "no such column", "ambiguous column name")


def _classify_error(exc: BaseException, timed_out: bool) -> ExecStatus:
    if timed_out:
        return ExecStatus.TIMEOUT
    if isinstance(exc, sqlite3.OperationalError):
        msg = str(exc).lower()
        if any(mark in msg for mark in _SCHEMA_ERROR_MARKS):
            return ExecStatus.SCHEMA_ERROR
        if "syntax error" in msg:
            return ExecStatus.SYNTAX_ERROR
        return ExecStatus.OTHER_ERROR
    return ExecStatus.OTHER_ERROR


def execute_sql(db_path: str, sql: str, timeout: float = DEFAULT_TIMEOUT,
                clock: Callable[[], float] = time.monotonic) -> ExecutionOutcome:
    """Run one read-only statement; every failure mode is encoded in the outcome."""
    if not sql or not sql.strip():
        raise ValueError("sql must be nonempty")
    start = clock()
    timed_out = threading.Event()
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True,
                               check_same_thread=False)
    except sqlite3.Error as exc:
        return ExecutionOutcome(
            status=ExecStatus.OTHER_ERROR,
            error_message=str(exc),
            exception_class=type(exc).__name__,
            elapsed=clock() - start,
        )
    timer = threading.Timer(timeout, lambda: (timed_out.set(), conn.interrupt()))
    timer.daemon = True
    timer.start()
    try:
        cursor = conn.execute(sql)
        rows = tuple(tuple(r) for r in cursor.fetchall())
    except (sqlite3.Error, sqlite3.Warning, ValueError, OverflowError) as exc:
        return ExecutionOutcome(
            status=_classify_error(exc, timed_out.is_set()),
            error_message=str(exc),
            exception_class=type(exc).__name__,
            elapsed=clock() - start,
        )
    finally:
        timer.cancel()
        conn.close()
    status = ExecStatus.OK if rows else ExecStatus.EMPTY_RESULT
    return ExecutionOutcome(status=status, rows=rows, elapsed=clock() - start)


def _normalize_value(value):
    if value is None:
        return ("null",)
    if isinstance(value, bytes):
        return ("blob", value)
    if isinstance(value, (int, float)):
        f = float(value)
        if f == 0.0:
            return ("num", "0")
        # quantized key: values within ~1e-6 relative distance share a key
        return ("num", f"{f:.6e}")
    return ("str", str(value).strip())


def normalize_rows(rows: Iterable[Sequence], order_sensitive: bool = False,
                   dedupe: bool = False):
    """Canonical form of a result set for comparison.

    Values are canonicalized (numbers via a relative-tolerance quantized key,
    text trimmed, null distinct from empty string). Unordered comparisons use a
    multiset by default; ``dedupe`` collapses duplicates to set semantics.
    """
    normalized = [tuple(_normalize_value(v) for v in row) for row in rows]
    if order_sensitive:
        return tuple(normalized)
    if dedupe:
        return frozenset(normalized)
    return Counter(normalized)


def rows_equal(a: Iterable[Sequence], b: Iterable[Sequence],
               order_sensitive: bool = False, dedupe: bool = False) -> bool:
    return (normalize_rows(a, order_sensitive, dedupe)
            == normalize_rows(b, order_sensitive, dedupe))


def has_top_level_order_by(sql: str) -> bool:
    """True when the query's outermost level contains ORDER BY (result order matters)."""
    i, depth, n = 0, 0, len(sql)
    last_word_order = False
    while i < n:
        c = sql[i]
        if c in "'\"`[":
            close = {"[": "]"}.get(c, c)
            i += 1
            while i < n:
                if sql[i] == close:
                    if c == "'" and i + 1 < n and sql[i + 1] == "'":
                        i += 2
                        continue
                    break
                i += 1
            i += 1
            last_word_order = False
        elif c == "-" and sql[i:i + 2] == "--":
            nl = sql.find("\n", i)
            i = n if nl < 0 else nl + 1
        elif c == "/" and sql[i:i + 2] == "/*":
            end = sql.find("*/", i + 2)
            i = n if end < 0 else end + 2
        elif c == "(":
            depth += 1
            i += 1
            last_word_order = False
        elif c == ")":
            depth -= 1
            i += 1
            last_word_order = False
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            word = sql[i:j].upper()
            if depth == 0:
                if last_word_order and word == "BY":
                    return True
                last_word_order = word == "ORDER"
            i = j
        else:
            if not c.isspace():
                last_word_order = False
            i += 1
    return False
