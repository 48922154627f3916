"""End-to-end question pipeline, batch runner with resume, and instruction export."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .backend import BackendUnavailable, ChatResponse, ScriptMiss
from .datasets import DatabaseRegistry, Task
from .decomposer import NoSqlFound, build_decomposer_prompt, parse_decomposition
from .evaluation import exec_match
from .execution import ExecStatus, ExecutionOutcome
from .refiner import RefineAttempt, refine_loop
from .schema import render_foreign_keys, render_schema_description, render_table_blocks
from .selector import (
    AllTablesDropped,
    NoJsonFound,
    apply_pruning,
    build_selector_prompt,
    needs_pruning,
    parse_pruning_decision,
)

logger = logging.getLogger(__name__)

SELECTOR = "selector"
DECOMPOSER = "decomposer"
REFINER = "refiner"

ROWS_PREVIEW_LIMIT = 20


class MissingGold(Exception):
    """Instruction export needs a gold query that is not available."""


@dataclass(frozen=True)
class PipelineConfig:
    prune_fraction: float = 0.8
    shots: int = 2
    max_rounds: int = 3
    timeout: float = 30.0
    parallelism: int = 1
    max_output_tokens: int = 1024
    model_name: str = ""


@dataclass
class LlmCall:
    agent: str
    prompt: str
    system: str
    response: str
    prompt_tokens: int
    completion_tokens: int
    latency: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, data: Mapping) -> "LlmCall":
        return cls(**data)


@dataclass
class PruningTrace:
    verdicts: dict
    selection: dict[str, list[str]]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdicts": self.verdicts, "selection": self.selection,
                "warnings": self.warnings}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PruningTrace":
        return cls(verdicts=dict(data["verdicts"]),
                   selection={k: list(v) for k, v in data["selection"].items()},
                   warnings=list(data.get("warnings", [])))


def _json_safe(value):
    if isinstance(value, bytes):
        return "0x" + value.hex()
    return value


def _outcome_to_dict(outcome: ExecutionOutcome) -> dict:
    preview = None
    row_count = None
    if outcome.rows is not None:
        row_count = len(outcome.rows)
        preview = [[_json_safe(v) for v in r] for r in outcome.rows[:ROWS_PREVIEW_LIMIT]]
    return {
        "status": outcome.status.value,
        "row_count": row_count,
        "rows_preview": preview,
        "error_message": outcome.error_message,
        "exception_class": outcome.exception_class,
        "elapsed": outcome.elapsed,
    }


def _outcome_from_dict(data: Mapping) -> ExecutionOutcome:
    status = ExecStatus(data["status"])
    rows = None
    if data.get("rows_preview") is not None:
        rows = tuple(tuple(r) for r in data["rows_preview"])
    return ExecutionOutcome(
        status=status,
        rows=rows,
        error_message=data.get("error_message", ""),
        exception_class=data.get("exception_class", ""),
        elapsed=data.get("elapsed", 0.0),
    )


@dataclass
class PipelineState:
    task: Task
    final_sql: str = ""
    pruning: Optional[PruningTrace] = None
    steps: list[tuple[str, str]] = field(default_factory=list)
    refine_attempts: list[RefineAttempt] = field(default_factory=list)
    llm_calls: list[LlmCall] = field(default_factory=list)
    error: Optional[str] = None
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "final_sql": self.final_sql,
            "pruning": self.pruning.to_dict() if self.pruning else None,
            "steps": [{"sub_question": q, "sub_sql": s} for q, s in self.steps],
            "refine_attempts": [
                {
                    "round": a.round,
                    "input_sql": a.input_sql,
                    "outcome": _outcome_to_dict(a.outcome),
                    "corrected_sql": a.corrected_sql,
                }
                for a in self.refine_attempts
            ],
            "llm_calls": [c.to_dict() for c in self.llm_calls],
            "error": self.error,
            "elapsed": self.elapsed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineState":
        pruning = (PruningTrace.from_dict(data["pruning"])
                   if data.get("pruning") else None)
        attempts = [
            RefineAttempt(
                round=a["round"],
                input_sql=a["input_sql"],
                outcome=_outcome_from_dict(a["outcome"]),
                corrected_sql=a.get("corrected_sql"),
            )
            for a in data.get("refine_attempts", [])
        ]
        return cls(
            task=Task.from_dict(data["task"]),
            final_sql=data.get("final_sql", ""),
            pruning=pruning,
            steps=[(s["sub_question"], s["sub_sql"]) for s in data.get("steps", [])],
            refine_attempts=attempts,
            llm_calls=[LlmCall.from_dict(c) for c in data.get("llm_calls", [])],
            error=data.get("error"),
            elapsed=data.get("elapsed", 0.0),
        )


class Pipeline:
    """Runs the selector -> decomposer -> refiner sequence per question."""

    def __init__(self, backend, registry: DatabaseRegistry,
                 config: PipelineConfig = PipelineConfig(),
                 clock: Callable[[], float] = time.monotonic):
        self.backend = backend
        self.registry = registry
        self.config = config
        self.clock = clock

    def _complete(self, agent: str, request, calls: list[LlmCall]) -> ChatResponse:
        response = self.backend.complete(request)
        calls.append(LlmCall(
            agent=agent,
            prompt=request.user_text,
            system=request.system_text,
            response=response.text,
            prompt_tokens=response.prompt_tokens,
            completion_tokens=response.completion_tokens,
            latency=response.latency,
        ))
        return response

    def run_question(self, task: Task) -> PipelineState:
        start = self.clock()
        state = PipelineState(task=task)
        config = self.config
        try:
            schema = self.registry.get_schema(task.db_id)
            db_path = self.registry.path(task.db_id)
            working = schema

            full_description = render_schema_description(schema)
            if needs_pruning(full_description, self.backend.context_window,
                             config.prune_fraction):
                request = build_selector_prompt(
                    schema, task.question, task.evidence,
                    max_output_tokens=config.max_output_tokens,
                    model_name=config.model_name)
                response = self._complete(SELECTOR, request, state.llm_calls)
                try:
                    decision = parse_pruning_decision(response.text, schema)
                    pruned = apply_pruning(schema, decision)
                except (NoJsonFound, AllTablesDropped) as exc:
                    logger.warning("selector failed for task %s (%s); "
                                   "using the full schema", task.task_id, exc)
                    state.pruning = None
                else:
                    state.pruning = PruningTrace(
                        verdicts=decision.verdicts,
                        selection={k: list(v) for k, v in pruned.selection.items()},
                        warnings=decision.warnings,
                    )
                    working = pruned.schema

            desc_str = render_table_blocks(working)
            fk_str = render_foreign_keys(working)

            request = build_decomposer_prompt(
                desc_str, fk_str, task.question, task.evidence,
                shots=config.shots, max_output_tokens=config.max_output_tokens,
                model_name=config.model_name)
            response = self._complete(DECOMPOSER, request, state.llm_calls)
            decomposition = parse_decomposition(response.text)
            state.steps = [(s.sub_question, s.sub_sql) for s in decomposition.steps]

            recorder = _RefinerRecorder(self, state.llm_calls)
            try:
                final_sql, attempts = refine_loop(
                    recorder, db_path, task.question, task.evidence,
                    desc_str, fk_str, decomposition.final_sql,
                    max_rounds=config.max_rounds, timeout=config.timeout,
                    clock=self.clock, max_output_tokens=config.max_output_tokens,
                    model_name=config.model_name)
            except (BackendUnavailable, ScriptMiss) as exc:
                state.error = f"refiner backend failure: {exc}"
                state.final_sql = decomposition.final_sql
            else:
                state.refine_attempts = attempts
                state.final_sql = final_sql
        except NoSqlFound as exc:
            state.error = f"decomposer produced no SQL: {exc}"
        except (BackendUnavailable, ScriptMiss) as exc:
            state.error = f"backend failure: {exc}"
        except Exception as exc:  # per-task isolation: nothing escapes a worker
            logger.exception("task %s failed", task.task_id)
            state.error = f"{type(exc).__name__}: {exc}"
        state.elapsed = self.clock() - start
        return state

    def run_batch(self, tasks: Sequence[Task], parallelism: Optional[int] = None,
                  journal_path: Optional[str] = None,
                  progress: Optional[Callable[[int, int, PipelineState], None]] = None,
                  ) -> list[PipelineState]:
        """Run tasks with per-task isolation; completed work is never redone.

        Results come back in input order regardless of completion order. With a
        journal path, finished states are appended as JSON lines and reruns skip
        task ids already present.
        """
        workers = parallelism or self.config.parallelism
        if workers < 1:
            raise ValueError("parallelism must be >= 1")

        journal = Journal(journal_path) if journal_path else None
        done: dict[str, PipelineState] = journal.load() if journal else {}

        pending = [t for t in tasks if t.task_id not in done]
        results: dict[str, PipelineState] = dict(done)
        completed = len(done)
        total = len(tasks)

        if pending:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(self.run_question, t): t for t in pending}
                for future in as_completed(futures):
                    state = future.result()
                    results[state.task.task_id] = state
                    if journal:
                        journal.append(state)
                    completed += 1
                    if progress:
                        progress(completed, total, state)
        return [results[t.task_id] for t in tasks]


class _RefinerRecorder:
    """Backend wrapper that records refiner calls into the pipeline trace."""

    def __init__(self, pipeline: Pipeline, calls: list[LlmCall]):
        self._pipeline = pipeline
        self._calls = calls
        self.context_window = pipeline.backend.context_window

    def complete(self, request) -> ChatResponse:
        return self._pipeline._complete(REFINER, request, self._calls)


class Journal:
    """Append-only JSONL trace store keyed by task id; the resume point for batches."""

    def __init__(self, path: str):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> dict[str, PipelineState]:
        states: dict[str, PipelineState] = {}
        if not self.path.exists():
            return states
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    state = PipelineState.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError) as exc:
                    logger.warning("skipping corrupt journal line: %s", exc)
                    continue
                states[state.task.task_id] = state
        return states

    def append(self, state: PipelineState) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(state.to_json() + "\n")
                handle.flush()


@dataclass
class InstructionRecord:
    agent_task: str
    prompt: str
    target_response: str
    db_id: str
    difficulty: str
    passed: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return self.__dict__.copy()


REFINER_TARGET_NOTE = "target is the post-correction response"


def export_instruction_data(states: Iterable[PipelineState],
                            registry: DatabaseRegistry,
                            gold_lookup: Optional[Mapping[str, str]] = None,
                            timeout: float = 30.0) -> list[InstructionRecord]:
    """One record per agent call, for states whose final SQL execution-matches gold.

    Raises MissingGold when a state has no gold query to filter against.
    """
    records: list[InstructionRecord] = []
    for state in states:
        task = state.task
        gold = task.gold_sql or (gold_lookup or {}).get(task.task_id)
        if not gold:
            raise MissingGold(f"no gold SQL for task {task.task_id}")
        if not state.final_sql:
            continue
        if not exec_match(state.final_sql, gold, registry.path(task.db_id),
                          timeout=timeout):
            continue
        for call in state.llm_calls:
            records.append(InstructionRecord(
                agent_task=call.agent,
                prompt=call.prompt,
                target_response=call.response,
                db_id=task.db_id,
                difficulty=task.difficulty,
                passed=True,
                note=REFINER_TARGET_NOTE if call.agent == REFINER else "",
            ))
    return records
