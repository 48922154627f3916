"""Schema pruning agent: size gate, prompt, decision parsing, and enforcement rules."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .backend import ChatRequest
from .prompts import SELECTOR_TEMPLATE, fill
from .schema import (
    DatabaseSchema,
    TableSchema,
    TokenEstimator,
    estimate_tokens,
    render_foreign_keys,
    render_table_blocks,
)

logger = logging.getLogger(__name__)

PRUNE_FRACTION = 0.8
MIN_COLUMNS_PER_TABLE = 6
MIN_TABLES = 3

KEEP_ALL = "keep_all"
DROP_ALL = "drop_all"


class NoJsonFound(Exception):
    """The selector response contains no parseable JSON object."""


class AllTablesDropped(Exception):
    """The pruning decision would leave no tables at all."""


@dataclass
class PruningDecision:
    """Validated per-table verdicts: keep_all, drop_all, or a column list."""

    verdicts: dict[str, str | list[str]]
    warnings: list[str] = field(default_factory=list)


@dataclass
class PrunedSchema:
    """A selection over a source schema, with the enforcement rules applied."""

    source: DatabaseSchema
    selection: dict[str, list[str]]

    @property
    def schema(self) -> DatabaseSchema:
        """The retained sub-schema as a standalone DatabaseSchema."""
        tables = []
        for t in self.source.tables:
            if t.name not in self.selection:
                continue
            keep = {c.lower() for c in self.selection[t.name]}
            cols = tuple(c for c in t.columns if c.name.lower() in keep)
            tables.append(TableSchema(name=t.name, columns=cols))
        schema = DatabaseSchema(
            db_id=self.source.db_id,
            tables=tuple(tables),
            foreign_keys=tuple(self._surviving_foreign_keys()),
            db_path=self.source.db_path,
        )
        return schema

    def _surviving_foreign_keys(self):
        keep = {t: {c.lower() for c in cols} for t, cols in self.selection.items()}
        by_lower = {t.lower(): t for t in self.selection}
        for fk in self.source.foreign_keys:
            src = by_lower.get(fk.from_table.lower())
            dst = by_lower.get(fk.to_table.lower())
            if src is None or dst is None:
                continue
            if fk.from_column.lower() in keep[src] and fk.to_column.lower() in keep[dst]:
                yield fk


def needs_pruning(rendered_schema: str, backend_context_window: int,
                  fraction: float = PRUNE_FRACTION,
                  estimator: Optional[TokenEstimator] = None) -> bool:
    """True when the schema text is too large a share of the model's context window."""
    if backend_context_window <= 0:
        raise ValueError("context window must be positive")
    return estimate_tokens(rendered_schema, estimator) > fraction * backend_context_window


def column_stats_exceed(db: DatabaseSchema, total_columns_limit: int,
                        avg_columns_limit: float) -> bool:
    """Alternative size gate based on column counts; thresholds are caller-supplied."""
    counts = [len(t.columns) for t in db.tables]
    if not counts:
        return False
    total = sum(counts)
    return total > total_columns_limit or total / len(counts) > avg_columns_limit


def build_selector_prompt(db: DatabaseSchema, question: str, evidence: str = "",
                          max_output_tokens: int = 1024, model_name: str = "") -> ChatRequest:
    user_text = fill(
        SELECTOR_TEMPLATE,
        db_id=db.db_id,
        desc_str=render_table_blocks(db),
        fk_str=render_foreign_keys(db),
        query=question,
        evidence=evidence,
    )
    return ChatRequest(user_text=user_text, max_output_tokens=max_output_tokens,
                       model_name=model_name)


def _find_json_object(text: str) -> Optional[dict]:
    start = text.find("{")
    while start >= 0:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            c = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
            elif c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        value = json.loads(text[start:i + 1])
                    except json.JSONDecodeError:
                        break
                    if isinstance(value, dict):
                        return value
                    break
        start = text.find("{", start + 1)
    return None


def parse_pruning_decision(response_text: str, db: DatabaseSchema) -> PruningDecision:
    """Extract and validate the JSON verdict object from a selector response.

    Unknown tables and columns are dropped with warnings; tables missing from
    the response default to keep_all.
    """
    raw = _find_json_object(response_text)
    if raw is None:
        raise NoJsonFound("selector response contains no JSON object")

    warnings: list[str] = []
    verdicts: dict[str, str | list[str]] = {}
    for key, value in raw.items():
        if not db.has_table(str(key)):
            warnings.append(f"unknown table {key!r} dropped from decision")
            continue
        table = db.table(str(key))
        if isinstance(value, str):
            verdict = value.strip().lower()
            if verdict not in (KEEP_ALL, DROP_ALL):
                warnings.append(f"unrecognized verdict {value!r} for table "
                                f"{table.name}; treating as keep_all")
                verdict = KEEP_ALL
            verdicts[table.name] = verdict
        elif isinstance(value, list):
            cols = []
            for item in value:
                if isinstance(item, str) and table.has_column(item):
                    canonical = table.column(item).name
                    if canonical not in cols:
                        cols.append(canonical)
                else:
                    warnings.append(f"unknown column {item!r} dropped from "
                                    f"table {table.name}")
            if cols:
                verdicts[table.name] = cols
            else:
                warnings.append(f"no valid columns listed for table {table.name}; "
                                f"treating as keep_all")
                verdicts[table.name] = KEEP_ALL
        else:
            warnings.append(f"unrecognized verdict {value!r} for table "
                            f"{table.name}; treating as keep_all")
            verdicts[table.name] = KEEP_ALL

    survivors = sum(1 for t in db.tables
                    if verdicts.get(t.name, KEEP_ALL) != DROP_ALL)
    if survivors == 0 and len(db.tables) < MIN_TABLES:
        raise AllTablesDropped("decision drops every table")

    for w in warnings:
        logger.warning("%s", w)
    return PruningDecision(verdicts=verdicts, warnings=warnings)


def apply_pruning(db: DatabaseSchema, decision: PruningDecision) -> PrunedSchema:
    """Materialize a decision, enforcing the hard retention guarantees.

    Rules: kept tables always retain their primary-key columns and at least
    min(6, all) columns (padded primary keys first, then declaration order);
    when fewer than 3 tables survive on a database with 3 or more, dropped
    tables are restored in declaration order; foreign keys are filtered to
    surviving endpoints.
    """
    verdicts = {t.name: decision.verdicts.get(t.name, KEEP_ALL) for t in db.tables}
    surviving = [t for t in db.tables if verdicts[t.name] != DROP_ALL]

    if len(db.tables) >= MIN_TABLES and len(surviving) < MIN_TABLES:
        for t in db.tables:
            if t not in surviving:
                verdicts[t.name] = KEEP_ALL
                surviving.append(t)
            if len(surviving) >= MIN_TABLES:
                break
        surviving = [t for t in db.tables if verdicts[t.name] != DROP_ALL]

    if not surviving:
        raise AllTablesDropped("pruning would leave zero tables")

    selection: dict[str, list[str]] = {}
    for t in surviving:
        verdict = verdicts[t.name]
        if verdict == KEEP_ALL:
            selection[t.name] = [c.name for c in t.columns]
            continue
        kept = {c.lower() for c in verdict}
        kept.update(name.lower() for name in t.primary_key_names())
        floor = min(MIN_COLUMNS_PER_TABLE, len(t.columns))
        padding = t.primary_key_names() + [c.name for c in t.columns
                                           if not c.is_primary_key]
        for name in padding:
            if len(kept) >= floor:
                break
            kept.add(name.lower())
        selection[t.name] = [c.name for c in t.columns if c.name.lower() in kept]

    return PrunedSchema(source=db, selection=selection)
