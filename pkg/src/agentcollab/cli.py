"""Command-line entry point.

Commands: solve, generate-data, validate-trace, bench, sweep, export-sft.
Configuration precedence is flags > environment > ``--config`` JSON file >
defaults. The effective configuration is embedded in (or written next to)
every output. The API key is read from ``AGENTCOLLAB_API_KEY`` and never
written anywhere; ``AGENTCOLLAB_BASE_URL`` overrides the endpoint URL.

Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import bench as bench_mod
from . import datapipe
from .backend import API_KEY_ENV, BASE_URL_ENV, FixtureParseError, OpenAICompatibleBackend, load_script
from .domain import Question, RunConfig, SolveStatus, TraceSample
from .mocks import mock_backend
from .orchestrator import CommandExecutor, PassthroughExecutor, run_question

log = logging.getLogger("agentcollab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

AXIS_NAMES = {
    "total-iterations": bench_mod.SweepAxis.TOTAL_ITERATIONS,
    "critic-iterations": bench_mod.SweepAxis.CRITIC_ITERATIONS,
    "total-agents": bench_mod.SweepAxis.TOTAL_AGENTS,
    "max-tokens": bench_mod.SweepAxis.MAX_TOKENS,
}


class ConfigError(Exception):
    pass


@dataclass
class BackendConfig:
    kind: str = "remote"
    base_url: Optional[str] = None
    model_id: Optional[str] = None
    script_path: Optional[str] = None


@dataclass
class ExecutorConfig:
    kind: str = "passthrough"
    command: str = "python3 -"
    timeout_seconds: float = 5.0


@dataclass
class AppConfig:
    run: RunConfig = field(default_factory=RunConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    output_dir: str = "out"
    seed: int = 0
    workers: Optional[int] = None

    def validate(self) -> None:
        b = self.backend
        if b.kind not in ("remote", "scripted", "mock"):
            raise ConfigError(f"unknown backend kind {b.kind!r}")
        if b.kind == "remote" and not (b.base_url and b.model_id):
            raise ConfigError(f"the remote backend needs a base URL (--base-url or {BASE_URL_ENV}) and --model")
        if b.kind == "scripted":
            if not b.script_path:
                raise ConfigError("the scripted backend needs --script")
            if not Path(b.script_path).is_file():
                raise ConfigError(f"script file not found: {b.script_path}")
        if self.executor.kind not in ("passthrough", "command"):
            raise ConfigError(f"unknown executor kind {self.executor.kind!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("--workers must be >= 1")

    def effective_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        # replayed and seeded-mock backends are order-sensitive
        return 1 if self.backend.kind in ("scripted", "mock") else (os.cpu_count() or 1)

    def snapshot(self) -> dict:
        """Config as embedded in outputs: no credential, no output location."""
        return {
            "run": self.run.to_dict(),
            "backend": dict(self.backend.__dict__),
            "executor": dict(self.executor.__dict__),
            "seed": self.seed,
        }


def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def build_config(args: argparse.Namespace, environ=os.environ) -> AppConfig:
    cfg = AppConfig()
    if args.config:
        data = _load_config_file(args.config)
        try:
            if "run" in data:
                cfg.run = RunConfig.from_dict(data["run"])
            if "backend" in data:
                cfg.backend = BackendConfig(**data["backend"])
            if "executor" in data:
                cfg.executor = ExecutorConfig(**data["executor"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config file {args.config}: {exc}") from exc
        cfg.output_dir = data.get("output_dir", cfg.output_dir)
        cfg.seed = data.get("seed", cfg.seed)
        cfg.workers = data.get("workers", cfg.workers)

    if environ.get(BASE_URL_ENV):
        cfg.backend.base_url = environ[BASE_URL_ENV]

    if args.backend:
        cfg.backend.kind = args.backend
    if args.script:
        cfg.backend.script_path = args.script
        if not args.backend:
            cfg.backend.kind = "scripted"
    if args.base_url:
        cfg.backend.base_url = args.base_url
    if args.model:
        cfg.backend.model_id = args.model
    if args.executor:
        cfg.executor.kind = args.executor
    if args.executor_command:
        cfg.executor.command = args.executor_command
    if args.executor_timeout is not None:
        cfg.executor.timeout_seconds = args.executor_timeout
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers

    overrides = {}
    for flag, name in (
        ("total_agents", "total_agents"),
        ("critic_iterations", "critic_iterations"),
        ("total_iterations", "total_iterations"),
        ("max_tokens", "default_max_tokens"),
        ("temperature", "temperature"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    if args.ceo:
        overrides["ceo_enabled"] = True
    if cfg.backend.model_id:
        overrides["model_id"] = cfg.backend.model_id
    try:
        cfg.run = replace(cfg.run, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def make_backend(cfg: AppConfig, questions=()):
    b = cfg.backend
    if b.kind == "scripted":
        try:
            return load_script(b.script_path)
        except FixtureParseError as exc:
            raise ConfigError(str(exc)) from exc
    if b.kind == "mock":
        truths = {q.id: q.ground_truth for q in questions if q.ground_truth}
        return mock_backend(cfg.seed, truths=truths)
    return OpenAICompatibleBackend(
        base_url=b.base_url, model_id=b.model_id, api_key=os.environ.get(API_KEY_ENV, ""),
        retry_limit=cfg.run.retry_limit,
    )


def make_executor(cfg: AppConfig):
    if cfg.executor.kind == "command":
        return CommandExecutor(cfg.executor.command.split(), cfg.executor.timeout_seconds)
    return PassthroughExecutor()


def _out_dir(cfg: AppConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def format_transcript(trace: TraceSample) -> str:
    lines = [f"# Question {trace.question.id}", "", trace.question.statement, ""]
    for t in trace.turns:
        who = t.agent.label + (f" ({t.agent.role_description})" if t.agent.role_description else "")
        lines += [f"## Turn {t.ordinal}: {who}", f"budget {t.budget}, tokens out {t.tokens_out}", ""]
        for m in t.prompt:
            lines += [f"### {m.role.value}", "", m.content, ""]
        lines += ["### response", "", t.response, ""]
    lines += [
        "## Result",
        f"final answer: {trace.final_answer}",
        f"consensus: {trace.consensus_reached}; format: {trace.format_ok}; correct: {trace.answer_correct}",
        "",
    ]
    return "\n".join(lines)


# -- commands ------------------------------------------------------------------


def _read_question(args) -> Question:
    if args.question_file:
        path = Path(args.question_file)
        if not path.is_file():
            raise ConfigError(f"question file not found: {path}")
        text = path.read_text(encoding="utf-8").strip()
        try:
            rec = json.loads(text.splitlines()[0]) if path.suffix == ".jsonl" else json.loads(text)
            q = datapipe.question_from_record(rec)
        except (ValueError, KeyError, IndexError) as exc:
            raise ConfigError(f"bad question file {path}: {exc}") from exc
    elif args.statement:
        q = Question(args.id, args.statement)
    else:
        raise ConfigError("give a question statement or --question-file")
    if args.ground_truth:
        q = replace(q, ground_truth=args.ground_truth)
    return q


def cmd_solve(args, cfg: AppConfig) -> int:
    question = _read_question(args)
    backend = make_backend(cfg, [question])
    outcome = run_question(question, cfg.run, backend, make_executor(cfg))
    out = _out_dir(cfg)
    _write_json(
        out / "trace.json",
        {
            "config": cfg.snapshot(),
            "status": outcome.status.value,
            "cause": outcome.cause,
            "iterations_used": outcome.iterations_used,
            "total_tokens": outcome.total_tokens,
            "notes": list(outcome.notes),
            "trace": datapipe.trace_to_record(outcome.trace),
        },
    )
    (out / "transcript.md").write_text(format_transcript(outcome.trace), encoding="utf-8")
    print(f"{question.id}: {outcome.status.value}; answer {outcome.final_answer!r}; "
          f"{len(outcome.trace.turns)} turns; {outcome.total_tokens} tokens")
    if outcome.status is SolveStatus.ABORTED:
        print(f"error: run aborted: {outcome.cause}", file=sys.stderr)
    return EXIT_OK if outcome.status is SolveStatus.SOLVED else EXIT_FAIL


def _read_pool(path) -> list[Question]:
    try:
        return datapipe.read_questions(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_generate_data(args, cfg: AppConfig) -> int:
    pool = _read_pool(args.pool)
    if args.target < 1:
        raise ConfigError("--target must be >= 1")
    backend = make_backend(cfg, pool)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", datapipe.PoolExhausted)
        dataset = datapipe.generate_dataset(
            pool, args.target, cfg.run, backend, make_executor(cfg),
            workers=cfg.effective_workers(), shuffle_seed=cfg.seed if args.shuffle else None,
        )
    out = _out_dir(cfg)
    count = datapipe.export_m500(dataset, out / "m500.jsonl")
    pairs = datapipe.write_sft(datapipe.export_sft_batches(dataset), out / "sft.jsonl")
    _write_json(out / "manifest.json", {
        "config": cfg.snapshot(), "pool": str(args.pool), "target": args.target,
        "collected": count, "sft_pairs": pairs, "shuffled": bool(args.shuffle),
    })
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"collected {count}/{args.target} traces; {pairs} SFT pairs")
    return EXIT_OK


def _load_traces(path: Path) -> list[TraceSample]:
    if not path.is_file():
        raise ConfigError(f"trace file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".jsonl":
            return [datapipe.trace_from_record(json.loads(ln)) for ln in text.splitlines() if ln.strip()]
        data = json.loads(text)
        return [datapipe.trace_from_record(data.get("trace", data))]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad trace file {path}: {exc}") from exc


def cmd_validate_trace(args, cfg: AppConfig) -> int:
    traces = _load_traces(Path(args.trace))
    all_valid = True
    for trace in traces:
        truth = args.ground_truth or trace.question.ground_truth
        if not truth:
            print(f"{trace.question.id}: no ground truth available", file=sys.stderr)
            all_valid = False
            continue
        report = datapipe.is_valid_trace(trace, truth)
        all_valid &= report.valid
        print(json.dumps({
            "id": trace.question.id, "valid": report.valid, "consensus": report.consensus_reached,
            "format": report.format_ok, "correct": report.answer_correct,
            "final_answer": report.final_answer, "violations": list(report.violations),
        }, ensure_ascii=False))
    return EXIT_OK if all_valid else EXIT_FAIL


def _read_bench(path) -> list[bench_mod.BenchItem]:
    try:
        items = bench_mod.read_bench_items(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not items:
        raise ConfigError(f"{path} holds no questions")
    return items


def _grader_for(items, requested: Optional[str]) -> str:
    kinds = {i.task_type for i in items}
    grader = requested or (kinds.pop() if len(kinds) == 1 else None)
    if grader is None:
        raise ConfigError(f"mixed task types {sorted(kinds)}; pass --grader")
    if any(i.task_type != grader for i in items):
        raise ConfigError(f"--grader {grader} does not match every question's task_type")
    return grader


def cmd_bench(args, cfg: AppConfig) -> int:
    items = _read_bench(args.bench)
    grader = _grader_for(items, args.grader)
    backend = make_backend(cfg, [i.question for i in items])
    report = bench_mod.run_benchmark(
        items, cfg.run, backend, grader, make_executor(cfg),
        workers=cfg.effective_workers(), task_name=Path(args.bench).stem,
    )
    out = _out_dir(cfg)
    bench_mod.write_report(report, out / "report.json", {"config": cfg.snapshot()})
    print(f"{report.task_name}: accuracy {report.accuracy:.4f} over {report.n_questions} questions")
    if all(r.status == SolveStatus.ABORTED.value for r in report.per_question):
        print("error: every question aborted", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _parse_values(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated integers, got {text!r}") from None


def cmd_sweep(args, cfg: AppConfig) -> int:
    items = _read_bench(args.bench)
    grader = _grader_for(items, args.grader)
    axis = AXIS_NAMES[args.axis]
    values = _parse_values(args.values)
    try:
        bench_mod.check_axis_values(axis, values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    backend = make_backend(cfg, [i.question for i in items])
    rows = bench_mod.sweep(items, axis, values, cfg.run, backend, grader,
                           executor=make_executor(cfg), workers=cfg.effective_workers())
    out = _out_dir(cfg)
    bench_mod.write_sweep_csv(rows, out / "sweep.csv")
    _write_json(out / "sweep.json", {
        "config": cfg.snapshot(), "axis": axis.value,
        "rows": [r.__dict__ for r in rows],
    })
    for r in rows:
        print(f"{args.axis}={r.value}: accuracy {r.accuracy:.4f}, mean tokens {r.mean_tokens:.1f}")
    if all(r.note.startswith("failed") for r in rows):
        return EXIT_FAIL
    return EXIT_OK


def cmd_export_sft(args, cfg: AppConfig) -> int:
    traces = _load_traces(Path(args.m500))
    try:
        batches = datapipe.export_sft_batches(traces)
    except datapipe.InvalidTraceInExport as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(cfg)
    pairs = datapipe.write_sft(batches, out / "sft.jsonl")
    print(f"wrote {pairs} SFT pairs in {len(batches)} batches")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--backend", choices=("remote", "scripted", "mock"))
    g.add_argument("--script", help="JSON-lines replay fixture (implies --backend scripted)")
    g.add_argument("--base-url")
    g.add_argument("--model")
    g.add_argument("--ceo", action="store_true", help="enable the CEO control loop")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--output-dir")
    g.add_argument("--executor", choices=("passthrough", "command"))
    g.add_argument("--executor-command")
    g.add_argument("--executor-timeout", type=float)
    g.add_argument("--total-agents", type=int)
    g.add_argument("--critic-iterations", type=int)
    g.add_argument("--total-iterations", type=int)
    g.add_argument("--max-tokens", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="agentcollab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="run the agents on one question")
    p.add_argument("statement", nargs="?")
    p.add_argument("--question-file")
    p.add_argument("--id", default="q0")
    p.add_argument("--ground-truth")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate-data", parents=[common], help="build an M500-style dataset")
    p.add_argument("--pool", required=True, help="JSON-lines question pool")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--shuffle", action="store_true", help="shuffle the pool with --seed")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("validate-trace", parents=[common], help="check traces against the filters")
    p.add_argument("--trace", required=True, help="trace.json or M500 .jsonl")
    p.add_argument("--ground-truth")
    p.set_defaults(func=cmd_validate_trace)

    p = sub.add_parser("bench", parents=[common], help="run and grade a benchmark file")
    p.add_argument("--bench", required=True)
    p.add_argument("--grader", choices=bench_mod.GRADERS)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[common], help="vary one resource axis")
    p.add_argument("--bench", required=True)
    p.add_argument("--grader", choices=bench_mod.GRADERS)
    p.add_argument("--axis", required=True, choices=sorted(AXIS_NAMES))
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-sft", parents=[common], help="flatten M500 records into SFT pairs")
    p.add_argument("--m500", required=True)
    p.set_defaults(func=cmd_export_sft)
    return parser


_NEEDS_BACKEND = {"solve", "generate-data", "bench", "sweep"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in _NEEDS_BACKEND:
            cfg = build_config(args)
        else:
            cfg = AppConfig(output_dir=args.output_dir or "out")
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
