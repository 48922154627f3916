"""SQLite schema introspection, cell-value sampling, and prompt-ready schema text."""

from __future__ import annotations

import logging
import math
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

MAX_LITERAL_LEN = 50
DEFAULT_SAMPLE_K = 5

TokenEstimator = Callable[[str], int]


class UnreadableDatabase(Exception):
    """Database file is missing, corrupt, or not a SQLite database."""


class UnknownColumn(Exception):
    """Requested table or column does not exist in the schema."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    declared_type: str = ""
    description: str = ""
    value_examples: tuple[str, ...] = ()
    is_primary_key: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("column name must be nonempty")
        if len(set(self.value_examples)) != len(self.value_examples):
            raise ValueError(f"duplicate value examples for column {self.name!r}")
        for lit in self.value_examples:
            if len(lit) > MAX_LITERAL_LEN:
                raise ValueError(f"value example longer than {MAX_LITERAL_LEN} chars: {lit!r}")


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSchema, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in table {self.name!r}")

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnSchema:
        for c in self.columns:
            if c.name.lower() == name.lower():
                return c
        raise UnknownColumn(f"{self.name}.{name}")

    def has_column(self, name: str) -> bool:
        return any(c.name.lower() == name.lower() for c in self.columns)

    def primary_key_names(self) -> list[str]:
        return [c.name for c in self.columns if c.is_primary_key]


@dataclass(frozen=True)
class ForeignKey:
    from_table: str
    from_column: str
    to_table: str
    to_column: str


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[TableSchema, ...]
    foreign_keys: tuple[ForeignKey, ...]
    db_path: str = ""

    def __post_init__(self):
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate table names in database {self.db_id!r}")
        for fk in self.foreign_keys:
            for tbl, col in ((fk.from_table, fk.from_column), (fk.to_table, fk.to_column)):
                if not self.has_column(tbl, col):
                    raise ValueError(f"foreign key endpoint {tbl}.{col} does not exist")

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name.lower() == name.lower():
                return t
        raise UnknownColumn(f"no such table: {name}")

    def has_table(self, name: str) -> bool:
        return any(t.name.lower() == name.lower() for t in self.tables)

    def has_column(self, table: str, column: str) -> bool:
        return self.has_table(table) and self.table(table).has_column(column)


def _type_affinity(declared_type: str) -> str:
    """SQLite column affinity from a declared type, per the engine's rules."""
    t = (declared_type or "").upper()
    if "INT" in t:
        return "INTEGER"
    if "CHAR" in t or "CLOB" in t or "TEXT" in t:
        return "TEXT"
    if not t:
        return "BLOB"
    if "BLOB" in t:
        return "BLOB"
    if "REAL" in t or "FLOA" in t or "DOUB" in t:
        return "REAL"
    return "NUMERIC"


def _is_numeric_affine(declared_type: str) -> bool:
    return _type_affinity(declared_type) in ("INTEGER", "REAL", "NUMERIC")


def render_literal(value) -> str:
    """One cell value as prompt text, truncated to the literal length cap."""
    if isinstance(value, str):
        rendered = repr(value)
    elif isinstance(value, float) and math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        rendered = f"{value:.1f}"
    else:
        rendered = str(value)
    return rendered[:MAX_LITERAL_LEN]


def _looks_like_url(s: str) -> bool:
    return "://" in s

def _looks_like_email(s: str) -> bool:
    at = s.find("@")
    return at > 0 and "." in s[at + 1 :]


def _sample_values(conn: sqlite3.Connection, table: str, column: str,
                   declared_type: str, k: int) -> list[str]:
    """Top-k distinct non-null values by descending frequency, rendered as literals.

    Returns [] for columns the prompt should not show cell values for:
    numeric-affine declared types, value sets dominated by URLs/emails, or
    values longer than the literal cap.
    """
    if _is_numeric_affine(declared_type):
        return []
    cur = conn.execute(
        f'SELECT "{_q(column)}", COUNT(*) AS n FROM "{_q(table)}" '
        f'WHERE "{_q(column)}" IS NOT NULL '
        f'GROUP BY "{_q(column)}" ORDER BY n DESC LIMIT 256'
    )
    groups = cur.fetchall()
    if not groups:
        return []
    raw_strings = [v for v, _ in groups if isinstance(v, str)]
    if raw_strings:
        odd = sum(1 for s in raw_strings if _looks_like_url(s) or _looks_like_email(s))
        if odd * 2 > len(raw_strings):
            return []
        if max(len(s) for s in raw_strings) > MAX_LITERAL_LEN:
            return []
    ranked = sorted(groups, key=lambda g: (-g[1], render_literal(g[0])))
    out: list[str] = []
    for value, _count in ranked:
        lit = render_literal(value)
        if lit not in out:
            out.append(lit)
        if len(out) >= k:
            break
    return out


def _q(identifier: str) -> str:
    return identifier.replace('"', '""')


def sample_column_values(db: DatabaseSchema, table: str, column: str,
                         k: int = DEFAULT_SAMPLE_K) -> list[str]:
    """Re-sample representative cell values for one column of an introspected database."""
    tbl = db.table(table)
    col = tbl.column(column)
    conn = _open_readonly(db.db_path)
    try:
        return _sample_values(conn, tbl.name, col.name, col.declared_type, k)
    finally:
        conn.close()


def _open_readonly(db_path: str) -> sqlite3.Connection:
    path = Path(db_path)
    if not path.exists():
        raise UnreadableDatabase(f"database file not found: {db_path}")
    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
        conn.execute("SELECT 1 FROM sqlite_master LIMIT 1")
    except sqlite3.Error as exc:
        raise UnreadableDatabase(f"cannot open {db_path}: {exc}") from exc
    return conn


def introspect(db_path: str,
               descriptions: Optional[Mapping[str, Mapping[str, str]]] = None,
               sample_k: int = DEFAULT_SAMPLE_K) -> DatabaseSchema:
    """Read tables, columns, keys, and sample values from a SQLite benchmark database.

    ``descriptions`` maps table -> column -> free-text description; entries are
    matched case-insensitively and unmatched entries are dropped with a warning.
    """
    conn = _open_readonly(db_path)
    desc_lookup = _fold_descriptions(descriptions or {})
    matched: set[tuple[str, str]] = set()
    try:
        table_rows = conn.execute(
            "SELECT name FROM sqlite_master "
            "WHERE type='table' AND name NOT LIKE 'sqlite_%'"
        ).fetchall()
        tables = []
        for (tname,) in table_rows:
            cols = []
            for _cid, cname, ctype, _notnull, _dflt, pk in conn.execute(
                f'PRAGMA table_info("{_q(tname)}")'
            ):
                key = (tname.lower(), cname.lower())
                desc = desc_lookup.get(key, "")
                if key in desc_lookup:
                    matched.add(key)
                cols.append(ColumnSchema(
                    name=cname,
                    declared_type=ctype or "",
                    description=desc,
                    value_examples=tuple(_sample_values(conn, tname, cname, ctype or "", sample_k)),
                    is_primary_key=pk > 0,
                ))
            tables.append(TableSchema(name=tname, columns=tuple(cols)))

        by_name = {t.name.lower(): t for t in tables}
        fks = []
        for t in tables:
            for row in conn.execute(f'PRAGMA foreign_key_list("{_q(t.name)}")'):
                _id, _seq, ref_table, from_col, to_col = row[0], row[1], row[2], row[3], row[4]
                ref = by_name.get((ref_table or "").lower())
                if ref is None or not t.has_column(from_col):
                    logger.warning("dropping unresolvable foreign key %s.%s -> %s.%s",
                                   t.name, from_col, ref_table, to_col)
                    continue
                if to_col is None:
                    pk_names = ref.primary_key_names()
                    if not pk_names:
                        logger.warning("dropping foreign key with no target column: %s.%s -> %s",
                                       t.name, from_col, ref_table)
                        continue
                    to_col = pk_names[0]
                if not ref.has_column(to_col):
                    logger.warning("dropping foreign key to missing column %s.%s", ref_table, to_col)
                    continue
                fks.append(ForeignKey(t.name, t.column(from_col).name,
                                      ref.name, ref.column(to_col).name))
    finally:
        conn.close()

    for key in set(desc_lookup) - matched:
        logger.warning("column description for %s.%s matches no column; dropped", key[0], key[1])

    return DatabaseSchema(
        db_id=Path(db_path).stem,
        tables=tuple(tables),
        foreign_keys=tuple(fks),
        db_path=str(db_path),
    )


def _fold_descriptions(descriptions: Mapping[str, Mapping[str, str]]) -> dict[tuple[str, str], str]:
    out = {}
    for table, cols in descriptions.items():
        for col, text in cols.items():
            out[(table.lower(), col.lower())] = text
    return out


Selection = Mapping[str, Sequence[str]]


def _retained(db: DatabaseSchema, selection: Optional[Selection]):
    """Yield (table, retained column list) pairs, validating selection names."""
    if selection is None:
        for t in db.tables:
            yield t, list(t.columns)
        return
    lowered = {name.lower(): cols for name, cols in selection.items()}
    for name in selection:
        if not db.has_table(name):
            raise UnknownColumn(f"selection names unknown table: {name}")
    for t in db.tables:
        if t.name.lower() not in lowered:
            continue
        wanted = {c.lower() for c in lowered[t.name.lower()]}
        for c in lowered[t.name.lower()]:
            if not t.has_column(c):
                raise UnknownColumn(f"selection names unknown column: {t.name}.{c}")
        yield t, [c for c in t.columns if c.name.lower() in wanted]


def render_table_blocks(db: DatabaseSchema, selection: Optional[Selection] = None) -> str:
    """The ``# Table:`` blocks used as the schema section of agent prompts."""
    blocks = []
    for table, cols in _retained(db, selection):
        lines = [f"# Table: {table.name}", "["]
        entries = []
        for col in cols:
            desc = col.description or col.name
            if col.value_examples:
                examples = ", ".join(col.value_examples)
                entries.append(f"    ({col.name}, {desc}. Value examples: [{examples}].)")
            else:
                entries.append(f"    ({col.name}, {desc}.)")
        lines.append(",\n".join(entries))
        lines.append("]")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def render_foreign_keys(db: DatabaseSchema, selection: Optional[Selection] = None) -> str:
    """Foreign-key lines, restricted to keys whose both endpoints survive pruning."""
    if selection is None:
        keep = None
    else:
        keep = {t.name.lower(): {c.name.lower() for c in cols}
                for t, cols in _retained(db, selection)}
    lines = []
    for fk in db.foreign_keys:
        if keep is not None:
            if fk.from_column.lower() not in keep.get(fk.from_table.lower(), set()):
                continue
            if fk.to_column.lower() not in keep.get(fk.to_table.lower(), set()):
                continue
        lines.append(f"{fk.from_table}.`{fk.from_column}` = {fk.to_table}.`{fk.to_column}`")
    return "\n".join(lines)


def render_schema_description(db: DatabaseSchema, selection: Optional[Selection] = None) -> str:
    """Full schema description: table blocks plus the foreign-key section."""
    return (render_table_blocks(db, selection)
            + "\n[Foreign keys]\n"
            + render_foreign_keys(db, selection))


def estimate_tokens(text: str, estimator: Optional[TokenEstimator] = None) -> int:
    """Token-count estimate for prompt budgeting; default is ceil(utf8_bytes / 4)."""
    if estimator is not None:
        return estimator(text)
    return math.ceil(len(text.encode("utf-8")) / 4)
