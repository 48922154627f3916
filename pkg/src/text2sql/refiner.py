"""Execute-and-fix loop: diagnose a candidate SQL and prompt for corrections."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

from .backend import ChatRequest
from .decomposer import extract_last_sql
from .execution import DEFAULT_TIMEOUT, ExecStatus, ExecutionOutcome, execute_sql
from .prompts import REFINER_TEMPLATE, fill

MAX_ROUNDS = 3

EMPTY_RESULT_ERROR = "empty result set"
EMPTY_RESULT_CLASS = "EmptyResult"


@dataclass(frozen=True)
class RefineAttempt:
    round: int
    input_sql: str
    outcome: ExecutionOutcome
    corrected_sql: Optional[str] = None


def diagnose(outcome: ExecutionOutcome) -> bool:
    """True when the outcome calls for a correction; OK with rows never does."""
    return outcome.status is not ExecStatus.OK


def build_refiner_prompt(question: str, evidence: str, schema_text: str,
                         fk_text: str, old_sql: str, outcome: ExecutionOutcome,
                         max_output_tokens: int = 1024,
                         model_name: str = "") -> ChatRequest:
    if outcome.status is ExecStatus.OK:
        raise ValueError("refiner prompt requires a failed outcome")
    if outcome.status is ExecStatus.EMPTY_RESULT:
        sqlite_error, exception_class = EMPTY_RESULT_ERROR, EMPTY_RESULT_CLASS
    else:
        sqlite_error = outcome.error_message
        exception_class = outcome.exception_class
    user_text = fill(
        REFINER_TEMPLATE,
        query=question,
        evidence=evidence,
        desc_str=schema_text,
        fk_str=fk_text,
        sql=old_sql,
        sqlite_error=sqlite_error,
        exception_class=exception_class,
    )
    return ChatRequest(user_text=user_text, max_output_tokens=max_output_tokens,
                       model_name=model_name)


def refine_loop(backend, db_path: str, question: str, evidence: str,
                schema_text: str, fk_text: str, initial_sql: str,
                max_rounds: int = MAX_ROUNDS, timeout: float = DEFAULT_TIMEOUT,
                clock: Callable[[], float] = time.monotonic,
                max_output_tokens: int = 1024,
                model_name: str = "") -> tuple[str, list[RefineAttempt]]:
    """Execute, and while faulty, ask for corrections up to ``max_rounds`` times.

    Returns the last candidate SQL whether or not it ultimately succeeded. A
    response from which no correction can be parsed ends the loop with the
    prior candidate. BackendUnavailable propagates to the caller.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    attempts: list[RefineAttempt] = []
    sql = initial_sql
    corrections = 0
    while True:
        rnd = len(attempts) + 1
        outcome = execute_sql(db_path, sql, timeout=timeout, clock=clock)
        if not diagnose(outcome) or corrections >= max_rounds:
            attempts.append(RefineAttempt(round=rnd, input_sql=sql, outcome=outcome))
            return sql, attempts
        request = build_refiner_prompt(question, evidence, schema_text, fk_text,
                                       sql, outcome,
                                       max_output_tokens=max_output_tokens,
                                       model_name=model_name)
        response = backend.complete(request)
        corrected = extract_last_sql(response.text)
        attempts.append(RefineAttempt(round=rnd, input_sql=sql, outcome=outcome,
                                      corrected_sql=corrected))
        if corrected is None:
            return sql, attempts
        sql = corrected
        corrections += 1
