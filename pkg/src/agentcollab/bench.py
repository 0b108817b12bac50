"""Grading and benchmark harness.

Three grading modes are supported: ``exact`` (normalised answer match),
``coverage`` (fraction of required concepts used in a paragraph) and
``code`` (program passes its tests, one sample). :func:`sweep` varies one
resource axis at a time and tabulates accuracy against token spend.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

from .backend import ScopedBackend
from .domain import AgentKind, Question, RunConfig, SolveStatus
from .orchestrator import CommandExecutor, Executor, ExecutorError, ExecutorTimeout, extract_code_blocks, run_question
from .parsing import strip_think

log = logging.getLogger(__name__)

GRADERS = ("exact", "coverage", "code")

_WS_RE = re.compile(r"\s+")
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)(/\d+)?$")
_FRAC_RE = re.compile(r"^([+-]?)\\[dt]?frac\{([+-]?\d+(?:\.\d+)?)\}\{([+-]?\d+(?:\.\d+)?)\}$")


def normalize_answer(text: str) -> str:
    s = _WS_RE.sub(" ", text.strip())
    while len(s) >= 2 and s.startswith("$") and s.endswith("$"):
        s = s[1:-1].strip()
    return s


def _as_number(s: str) -> Optional[Fraction]:
    if _NUMBER_RE.match(s):
        try:
            return Fraction(s)
        except (ValueError, ZeroDivisionError):
            return None
    m = _FRAC_RE.match(s.replace(" ", ""))
    if m:
        den = Fraction(m.group(3))
        if den == 0:
            return None
        value = Fraction(m.group(2)) / den
        return -value if m.group(1) == "-" else value
    return None


def grade_exact(answer: str, truth: str) -> bool:
    a, b = normalize_answer(answer), normalize_answer(truth)
    na, nb = _as_number(a), _as_number(b)
    if na is not None and nb is not None:
        return na == nb
    return a == b


_WORD_RE = re.compile(r"[a-z]+")


def _stem(word: str) -> str:
    for suffix, repl in (("ies", "y"), ("ing", ""), ("ed", ""), ("es", ""), ("s", "")):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: len(word) - len(suffix)] + repl
    return word


def _stems(text: str) -> list[str]:
    return [_stem(w) for w in _WORD_RE.findall(text.lower())]


def grade_concept_coverage(text: str, concepts: Sequence[str]) -> float:
    """Fraction of concepts found as whole words, tolerant of simple inflections."""
    if not concepts:
        raise ValueError("concepts must be non-empty")
    words = _stems(text)
    joined = " " + " ".join(words) + " "
    hits = 0
    for concept in concepts:
        target = _stems(concept)
        if target and f" {' '.join(target)} " in joined:
            hits += 1
    return hits / len(concepts)


def grade_code(program: str, tests: Sequence[str], runner, notes: Optional[list] = None) -> bool:
    """Pass@1 for one sample: the program must run cleanly together with each test."""
    for test in tests:
        try:
            runner.run_code(f"{program}\n\n{test}\n")
        except ExecutorTimeout as exc:
            if notes is not None:
                notes.append(f"timeout: {exc}")
            return False
        except ExecutorError as exc:
            if notes is not None:
                notes.append(f"failed: {exc}")
            return False
    return True


@dataclass(frozen=True)
class BenchItem:
    question: Question
    task_type: str = "exact"
    concepts: tuple[str, ...] = ()
    tests: tuple[str, ...] = ()

    def __post_init__(self):
        if self.task_type not in GRADERS:
            raise ValueError(f"unknown task_type {self.task_type!r}")
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "tests", tuple(self.tests))


def read_bench_items(path) -> list[BenchItem]:
    items = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                q = Question(
                    id=str(rec["id"]),
                    statement=rec["statement"],
                    category=rec.get("category"),
                    ground_truth=None if rec.get("ground_truth") is None else str(rec["ground_truth"]),
                )
                items.append(
                    BenchItem(q, rec.get("task_type", "exact"), rec.get("concepts") or (), rec.get("tests") or ())
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad benchmark record ({exc})") from exc
    return items


@dataclass(frozen=True)
class QuestionResult:
    id: str
    correct: bool
    tokens: int
    turns: int
    score: float
    status: str
    note: str = ""


@dataclass(frozen=True)
class BenchReport:
    task_name: str
    n_questions: int
    accuracy: float
    per_question: tuple[QuestionResult, ...]
    config_snapshot: RunConfig

    def to_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "n_questions": self.n_questions,
            "accuracy": self.accuracy,
            "per_question": [r.__dict__ for r in self.per_question],
            "config_snapshot": self.config_snapshot.to_dict(),
        }


def mean_score(rows: Sequence[QuestionResult]) -> float:
    return sum(r.score for r in rows) / len(rows)


def final_solution_text(trace) -> str:
    drafts = [t for t in trace.turns if t.agent.kind is AgentKind.PROBLEM_SOLVER and t.agent.solver_index == 0]
    return strip_think(drafts[-1].response).strip() if drafts else ""


def _grade_item(item: BenchItem, grader: str, outcome, code_runner) -> tuple[float, str]:
    if grader == "exact":
        truth = item.question.ground_truth
        if not truth:
            raise ValueError(f"{item.question.id}: exact grading needs ground_truth")
        return float(outcome.final_answer is not None and grade_exact(outcome.final_answer, truth)), ""
    text = final_solution_text(outcome.trace)
    if grader == "coverage":
        return grade_concept_coverage(text, item.concepts), ""
    notes: list[str] = []
    program = "\n\n".join(extract_code_blocks(text))
    if not program:
        return 0.0, "no code block in final solution"
    passed = grade_code(program, item.tests, code_runner, notes)
    return float(passed), "; ".join(notes)


def run_benchmark(
    questions: Sequence[Union[Question, BenchItem]],
    config: RunConfig,
    backend,
    grader: str = "exact",
    executor: Optional[Executor] = None,
    code_runner=None,
    workers: int = 1,
    task_name: str = "benchmark",
) -> BenchReport:
    if not questions:
        raise ValueError("benchmark needs at least one question")
    if grader not in GRADERS:
        raise ValueError(f"unknown grader {grader!r}")
    items = [q if isinstance(q, BenchItem) else BenchItem(q) for q in questions]
    for item in items:
        if item.task_type != grader:
            raise ValueError(f"{item.question.id} is a {item.task_type} task but grader is {grader}")
    if grader == "code" and code_runner is None:
        code_runner = CommandExecutor()

    def one(item: BenchItem) -> QuestionResult:
        outcome = run_question(item.question, config, ScopedBackend(backend, item.question.id), executor)
        turns = len(outcome.trace.turns)
        if outcome.status is SolveStatus.ABORTED:
            return QuestionResult(item.question.id, False, outcome.total_tokens, turns, 0.0,
                                  outcome.status.value, f"aborted: {outcome.cause}")
        score, note = _grade_item(item, grader, outcome, code_runner)
        return QuestionResult(item.question.id, score >= 1.0, outcome.total_tokens, turns, score,
                              outcome.status.value, note)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, items))
    else:
        rows = [one(item) for item in items]
    rows.sort(key=lambda r: r.id)
    return BenchReport(task_name, len(rows), mean_score(rows), tuple(rows), config)


class SweepAxis(str, enum.Enum):
    TOTAL_ITERATIONS = "TotalIterations"
    CRITIC_ITERATIONS = "CriticIterations"
    TOTAL_AGENTS = "TotalAgents"
    MAX_TOKENS = "MaxTokens"


_AXIS_FIELD = {
    SweepAxis.TOTAL_ITERATIONS: ("total_iterations", 1),
    SweepAxis.CRITIC_ITERATIONS: ("critic_iterations", 1),
    SweepAxis.TOTAL_AGENTS: ("total_agents", 2),
    SweepAxis.MAX_TOKENS: ("default_max_tokens", 1),
}


def check_axis_values(axis: SweepAxis, values: Sequence[int]) -> None:
    if not values:
        raise ValueError("sweep needs at least one value")
    _, minimum = _AXIS_FIELD[SweepAxis(axis)]
    bad = [v for v in values if not isinstance(v, int) or isinstance(v, bool) or v < minimum]
    if bad:
        raise ValueError(f"illegal values for {SweepAxis(axis).value}: {bad} (minimum {minimum})")


def config_for(base: RunConfig, axis: SweepAxis, value: int) -> RunConfig:
    name, _ = _AXIS_FIELD[SweepAxis(axis)]
    return replace(base, **{name: value})


@dataclass(frozen=True)
class SweepRow:
    value: int
    accuracy: float
    mean_tokens: float
    mean_turns: float
    note: str = ""


def sweep(
    questions: Sequence[Union[Question, BenchItem]],
    axis: SweepAxis,
    values: Sequence[int],
    base: RunConfig,
    backend,
    grader: str = "exact",
    **bench_kwargs,
) -> list[SweepRow]:
    """One benchmark per axis value, everything else held at ``base``."""
    axis = SweepAxis(axis)
    check_axis_values(axis, values)
    rows = []
    for value in values:
        if hasattr(backend, "reset"):
            backend.reset()
        try:
            report = run_benchmark(questions, config_for(base, axis, value), backend, grader, **bench_kwargs)
        except Exception as exc:  # a failed cell must not sink the table
            log.warning("sweep cell %s=%s failed: %s", axis.value, value, exc)
            rows.append(SweepRow(value, 0.0, 0.0, 0.0, f"failed: {type(exc).__name__}: {exc}"))
            continue
        per = report.per_question
        rows.append(
            SweepRow(
                value,
                report.accuracy,
                sum(r.tokens for r in per) / len(per),
                sum(r.turns for r in per) / len(per),
            )
        )
    return rows


def write_report(report: BenchReport, path, extra: Optional[dict] = None) -> None:
    data = report.to_dict()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "accuracy", "mean_tokens", "mean_turns"])
        for r in rows:
            w.writerow([r.value, f"{r.accuracy:.6f}", f"{r.mean_tokens:.3f}", f"{r.mean_turns:.3f}"])
