"""Command-line interface: ask one question, run benches, evaluate, export SFT data."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Optional

import click

from .backend import DEFAULT_CONTEXT_WINDOW, HttpBackend, ScriptedBackend
from .datasets import DatabaseRegistry, Task, load_benchmark, load_column_descriptions
from .evaluation import build_report, exec_match, score_item
from .execution import execute_sql
from .pipeline import (
    Journal,
    MissingGold,
    Pipeline,
    PipelineConfig,
    PipelineState,
    export_instruction_data,
)

ENV_PREFIX = "TEXT2SQL_"

_DEFAULTS = {
    "backend": "http",
    "endpoint": "",
    "model": "gpt-4",
    "api_key_env": "LLM_API_KEY",
    "script_path": "",
    "script_strict": False,
    "context_window": DEFAULT_CONTEXT_WINDOW,
    "prune_fraction": 0.8,
    "shots": 2,
    "max_rounds": 3,
    "timeout": 30.0,
    "parallelism": 1,
    "max_output_tokens": 1024,
    "max_in_flight": 0,
}

_INT_KEYS = {"context_window", "shots", "max_rounds", "parallelism",
             "max_output_tokens", "max_in_flight"}
_FLOAT_KEYS = {"prune_fraction", "timeout"}
_BOOL_KEYS = {"script_strict"}


def _coerce(key: str, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    return value


def resolve_settings(config_path: Optional[str], flags: dict) -> dict:
    """Merged settings with flag > environment > file > default precedence."""
    settings = dict(_DEFAULTS)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as handle:
                file_settings = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config file {config_path}: {exc}")
        if not isinstance(file_settings, dict):
            raise click.UsageError("config file must contain a JSON object")
        for key, value in file_settings.items():
            if key in settings:
                settings[key] = _coerce(key, value)
    for key in settings:
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            settings[key] = _coerce(key, env_value)
    for key, value in flags.items():
        if value is not None and key in settings:
            settings[key] = _coerce(key, value)
    return settings


def build_backend(settings: dict):
    if settings["backend"] == "script":
        if not settings["script_path"]:
            raise click.UsageError("scripted backend requires --script")
        return ScriptedBackend.from_file(settings["script_path"],
                                         strict=settings["script_strict"],
                                         context_window=settings["context_window"])
    if settings["backend"] == "http":
        if not settings["endpoint"]:
            raise click.UsageError("http backend requires an endpoint "
                                   "(--endpoint, TEXT2SQL_ENDPOINT, or config file)")
        return HttpBackend(endpoint=settings["endpoint"], model=settings["model"],
                           api_key_env=settings["api_key_env"],
                           context_window=settings["context_window"],
                           max_in_flight=settings["max_in_flight"] or None)
    raise click.UsageError(f"unknown backend {settings['backend']!r}")


def pipeline_config(settings: dict) -> PipelineConfig:
    return PipelineConfig(
        prune_fraction=settings["prune_fraction"],
        shots=settings["shots"],
        max_rounds=settings["max_rounds"],
        timeout=settings["timeout"],
        parallelism=settings["parallelism"],
        max_output_tokens=settings["max_output_tokens"],
        model_name=settings["model"],
    )


def _backend_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     default=None, help="JSON config file."),
        click.option("--backend", type=click.Choice(["http", "script"]), default=None),
        click.option("--endpoint", default=None),
        click.option("--model", default=None),
        click.option("--script", "script_path", type=click.Path(exists=True),
                     default=None, help="Scripted-backend fixture file."),
        click.option("--shots", type=click.Choice(["0", "1", "2"]), default=None),
        click.option("--max-rounds", "max_rounds", type=int, default=None),
        click.option("--json", "json_output", is_flag=True,
                     help="Machine-readable output on stdout."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Multi-agent text-to-SQL pipeline and its evaluation harness."""


@main.command("ask")
@click.option("--db", "db_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--question", required=True)
@click.option("--evidence", default="")
@click.option("--execute", "execute_flag", is_flag=True,
              help="Also run the final SQL and print its rows.")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the full pipeline trace as JSON.")
@_backend_options
def cmd_ask(db_path, question, evidence, execute_flag, trace_path, config_path,
            backend, endpoint, model, script_path, shots, max_rounds, json_output):
    """Translate one natural-language question against one database file."""
    settings = resolve_settings(config_path, {
        "backend": backend, "endpoint": endpoint, "model": model,
        "script_path": script_path, "shots": shots, "max_rounds": max_rounds,
    })
    llm = build_backend(settings)
    registry = DatabaseRegistry()
    db_id = Path(db_path).stem
    registry.register(db_id, db_path,
                      load_column_descriptions(Path(db_path).parent))
    pipe = Pipeline(llm, registry, pipeline_config(settings))

    task = Task(task_id="0", db_id=db_id, question=question, evidence=evidence)
    state = pipe.run_question(task)

    if trace_path:
        Path(trace_path).write_text(json.dumps(state.to_dict(), indent=2,
                                               sort_keys=True), encoding="utf-8")
    if state.error:
        click.echo(f"error: {state.error}", err=True)

    rows = None
    if execute_flag and state.final_sql:
        outcome = execute_sql(db_path, state.final_sql, timeout=settings["timeout"])
        rows = [list(r) for r in outcome.rows] if outcome.rows is not None else None

    if json_output:
        click.echo(json.dumps({"sql": state.final_sql, "rows": rows,
                               "error": state.error}, sort_keys=True))
    else:
        click.echo(state.final_sql)
        if rows is not None:
            for row in rows:
                click.echo("\t".join(str(v) for v in row))
    sys.exit(0 if state.final_sql else 1)


@main.command("bench")
@click.option("--benchmark", "benchmark_name", required=True,
              type=click.Choice(["bird", "spider"]))
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--db-root", "db_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--journal", "journal_path", required=True, type=click.Path())
@click.option("--parallelism", type=int, default=None)
@click.option("--limit", type=int, default=None,
              help="Only run the first N items.")
@_backend_options
def cmd_bench(benchmark_name, items_path, db_root, journal_path, parallelism,
              limit, config_path, backend, endpoint, model, script_path, shots,
              max_rounds, json_output):
    """Run a benchmark batch with a resumable journal."""
    settings = resolve_settings(config_path, {
        "backend": backend, "endpoint": endpoint, "model": model,
        "script_path": script_path, "shots": shots, "max_rounds": max_rounds,
        "parallelism": parallelism,
    })
    bench = load_benchmark(benchmark_name, items_path, db_root)
    tasks = bench.tasks[:limit] if limit else bench.tasks
    llm = build_backend(settings)
    pipe = Pipeline(llm, bench.registry(), pipeline_config(settings))

    def progress(done, total, state):
        label = "error" if state.error else "ok"
        click.echo(f"[{done}/{total}] {state.task.task_id}: {label}", err=True)

    states = pipe.run_batch(tasks, journal_path=journal_path, progress=progress)

    with_gold = [(s, s.task.gold_sql) for s in states if s.task.gold_sql]
    summary = {"n": len(states), "journal": journal_path, "ex_pct": None}
    if with_gold:
        hits = sum(
            1 for state, gold in with_gold
            if state.final_sql and exec_match(
                state.final_sql, gold, bench.registry().path(state.task.db_id),
                timeout=settings["timeout"])
        )
        summary["ex_pct"] = 100.0 * hits / len(with_gold)
    if json_output:
        click.echo(json.dumps(summary, sort_keys=True))
    elif summary["ex_pct"] is not None:
        click.echo(f"EX: {summary['ex_pct']:.2f} over {len(with_gold)} items "
                   f"-> {journal_path}")
    else:
        click.echo(f"{len(states)} items -> {journal_path}")


def _load_predictions(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise click.UsageError(f"cannot read predictions: {exc}")
    if not text.strip():
        raise click.UsageError("predictions file is empty")
    try:
        data = json.loads(text)
        if isinstance(data, dict) and all(isinstance(v, str) for v in data.values()):
            return {str(k): v for k, v in data.items()}
    except json.JSONDecodeError:
        pass
    predictions: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            state = PipelineState.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise click.UsageError(f"unparseable predictions line: {exc}")
        predictions[state.task.task_id] = state.final_sql
    if not predictions:
        raise click.UsageError("predictions file contains no predictions")
    return predictions


@main.command("eval")
@click.option("--predictions", "predictions_path", required=True,
              type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_name", required=True,
              type=click.Choice(["bird", "spider"]))
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--db-root", "db_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_prefix", default="eval_report",
              help="Prefix for the .json and .txt report files.")
@click.option("--ves/--no-ves", "with_ves", default=True)
@click.option("--timeout", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "json_output", is_flag=True)
def cmd_eval(predictions_path, benchmark_name, items_path, db_root, out_prefix,
             with_ves, timeout, config_path, json_output):
    """Score a predictions file (task_id -> SQL, or a trace journal) against gold."""
    settings = resolve_settings(config_path, {"timeout": timeout})
    predictions = _load_predictions(predictions_path)
    bench = load_benchmark(benchmark_name, items_path, db_root)

    scores = []
    for task in bench.tasks:
        if not task.gold_sql:
            raise click.UsageError(f"task {task.task_id} has no gold SQL to score against")
        pred = predictions.get(task.task_id, "")
        scores.append(score_item(
            task.task_id, pred, task.gold_sql,
            bench.registry().path(task.db_id),
            timeout=settings["timeout"], difficulty=task.difficulty,
            with_ves=with_ves))
    report = build_report(scores, bench.tasks)

    json_path = Path(f"{out_prefix}.json")
    text_path = Path(f"{out_prefix}.txt")
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.to_text() + "\n", encoding="utf-8")
    click.echo(f"report written to {json_path} and {text_path}", err=True)
    click.echo(report.to_json() if json_output else report.to_text())


@main.command("export-sft")
@click.option("--journal", "journal_path", required=True, type=click.Path(exists=True))
@click.option("--benchmark", "benchmark_name", required=True,
              type=click.Choice(["bird", "spider"]))
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--db-root", "db_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--timeout", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "json_output", is_flag=True)
def cmd_export_sft(journal_path, benchmark_name, items_path, db_root, out_path,
                   timeout, config_path, json_output):
    """Filter a trace journal to instruction records for supervised fine-tuning."""
    settings = resolve_settings(config_path, {"timeout": timeout})
    bench = load_benchmark(benchmark_name, items_path, db_root)
    gold_lookup = {t.task_id: t.gold_sql for t in bench.tasks if t.gold_sql}
    states = list(Journal(journal_path).load().values())
    try:
        records = export_instruction_data(states, bench.registry(),
                                          gold_lookup=gold_lookup,
                                          timeout=settings["timeout"])
    except MissingGold as exc:
        raise click.UsageError(str(exc))

    with open(out_path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    counts: dict[str, int] = {}
    for record in records:
        counts[record.difficulty] = counts.get(record.difficulty, 0) + 1
    if json_output:
        click.echo(json.dumps({"records": len(records), "per_difficulty": counts,
                               "out": out_path}, sort_keys=True))
    else:
        click.echo(f"{len(records)} records -> {out_path}")
        for label in sorted(counts):
            click.echo(f"  {label}: {counts[label]}")


if __name__ == "__main__":
    main()
