"""Dataset generation: gate questions, run the agents, keep only clean traces.

A trace is kept when three things hold:

* consensus - in some critic iteration every critic ended with ``[Agree]``;
* format - every turn has a closed ``<think>`` block and every drafting-solver
  turn carries a ``\\boxed{}`` answer;
* correctness - the last drafting-solver answer matches the ground truth.

Kept traces are written as M500 records (one JSON object per line) and can be
flattened into per-question SFT batches that preserve generation order. The
fine-tuning objective itself is not computed here: each pair's ``target`` is
what a causal-LM loss would be taken over, conditioned on ``messages``.
"""

from __future__ import annotations

import json
import logging
import random
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .backend import ChatRequest, ScopedBackend, count_tokens
from .bench import grade_exact
from .domain import (
    AgentKind,
    AgentRole,
    ChatMessage,
    ConsensusMark,
    MessageRole,
    Question,
    RunConfig,
    TraceSample,
    TranscriptTurn,
)
from .orchestrator import Executor, run_question
from .parsing import ParseError, detect_consensus, extract_boxed, strip_think, validate_format

log = logging.getLogger(__name__)

DIFFICULTY_THRESHOLD = 1024
PROBE_MAX_TOKENS = 32000

JUDGE_SYSTEM = "You assess which kinds of expertise a problem requires."
JUDGE_PROMPT = (
    "Does solving the following problem benefit from multiple distinct expert specialties? "
    "Answer Yes or No first."
)
JUDGE_REMINDER = "Your reply must begin with the word Yes or No."
PROBE_SYSTEM = "Solve the following problem. Put your final answer in \\boxed{}."


class InvalidTraceInExport(ValueError):
    pass


class PoolExhausted(UserWarning):
    def __init__(self, collected: int, target: int):
        super().__init__(f"question pool exhausted with {collected} of {target} traces collected")
        self.collected = collected
        self.target = target


@dataclass(frozen=True)
class ValidationReport:
    consensus_reached: bool
    format_ok: bool
    answer_correct: bool
    violations: tuple[str, ...] = ()
    final_answer: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.consensus_reached and self.format_ok and self.answer_correct


def _is_drafter(turn: TranscriptTurn) -> bool:
    return turn.agent.kind is AgentKind.PROBLEM_SOLVER and turn.agent.solver_index == 0


def _is_critic(turn: TranscriptTurn) -> bool:
    return turn.agent.kind is AgentKind.PROBLEM_SOLVER and (turn.agent.solver_index or 0) >= 1


def critic_iterations_of(turns: Sequence[TranscriptTurn]) -> list[dict[int, ConsensusMark]]:
    """Group consecutive critic turns into iterations; the last mark per critic wins (re-asks)."""
    groups: list[dict[int, ConsensusMark]] = []
    current: Optional[dict[int, ConsensusMark]] = None
    for turn in turns:
        if _is_critic(turn):
            if current is None:
                current = {}
                groups.append(current)
            current[turn.agent.solver_index] = detect_consensus(turn.response)
        else:
            current = None
    return groups


def assess_turns(turns: Sequence[TranscriptTurn], ground_truth: Optional[str]) -> ValidationReport:
    violations = []

    iterations = critic_iterations_of(turns)
    consensus = any(g and all(m is ConsensusMark.AGREE for m in g.values()) for g in iterations)
    if not consensus:
        violations.append("no_consensus")

    format_ok = True
    drafts = [t for t in turns if _is_drafter(t)]
    if not drafts:
        format_ok = False
        violations.append("no_solution_turn")
    for turn in turns:
        report = validate_format(turn.response, answer_bearing=_is_drafter(turn))
        if not report.format_ok:
            format_ok = False
            violations.extend(f"turn {turn.ordinal}: {v}" for v in report.violations)

    final_answer = None
    if drafts:
        try:
            final_answer = extract_boxed(drafts[-1].response)
        except ParseError:
            pass

    correct = False
    if not ground_truth:
        violations.append("no_ground_truth")
    elif final_answer is None:
        violations.append("no_final_answer")
    else:
        correct = grade_exact(final_answer, ground_truth)
        if not correct:
            violations.append(f"wrong_answer: {final_answer!r} != {ground_truth!r}")

    return ValidationReport(consensus, format_ok, correct, tuple(violations), final_answer)


def is_valid_trace(trace: TraceSample, ground_truth: str) -> ValidationReport:
    if not ground_truth:
        raise ValueError("ground_truth must be non-empty")
    return assess_turns(trace.turns, ground_truth)


def _first_word(text: str) -> str:
    for raw in strip_think(text).split():
        word = "".join(c for c in raw.lower() if c.isalpha())
        if word:
            return word
    return ""


def is_interdisciplinary(
    question: Question, backend, max_tokens: int = 4096, notes: Optional[list] = None
) -> bool:
    """Ask the model whether the question needs several expert specialties."""
    messages = [
        ChatMessage(MessageRole.SYSTEM, JUDGE_SYSTEM),
        ChatMessage(MessageRole.USER, f"{JUDGE_PROMPT}\n\nProblem:\n{question.statement}"),
    ]
    for attempt in range(2):
        response = backend.complete(ChatRequest(tuple(messages), max_tokens, tag="judge"))
        word = _first_word(response.content)
        if word in ("yes", "y"):
            return True
        if word in ("no", "n"):
            return False
        messages = messages[:2] + [ChatMessage(MessageRole.USER, JUDGE_REMINDER)]
    note = f"{question.id}: interdisciplinarity judge unparseable; excluding"
    log.info(note)
    if notes is not None:
        notes.append(note)
    return False


def passes_difficulty(
    question: Question,
    backend,
    max_tokens: int = PROBE_MAX_TOKENS,
    counter: Callable[[str], int] = count_tokens,
    threshold: int = DIFFICULTY_THRESHOLD,
) -> bool:
    """True when a single-agent answer uses at least ``threshold`` tokens."""
    messages = (
        ChatMessage(MessageRole.SYSTEM, PROBE_SYSTEM),
        ChatMessage(MessageRole.USER, question.statement),
    )
    response = backend.complete(ChatRequest(messages, max_tokens, tag="probe"))
    return counter(response.content) >= threshold


def _dedupe(pool: Iterable[Question]) -> list[Question]:
    seen = set()
    out = []
    for q in pool:
        if q.id in seen:
            log.info("dropping duplicate question id %s", q.id)
            continue
        seen.add(q.id)
        out.append(q)
    return out


def generate_dataset(
    pool: Sequence[Question],
    target_n: int,
    config: RunConfig,
    backend,
    executor: Optional[Executor] = None,
    workers: int = 1,
    shuffle_seed: Optional[int] = None,
    notes: Optional[list] = None,
) -> list[TraceSample]:
    """Collect up to ``target_n`` valid traces, walking ``pool`` in order."""
    if target_n < 1:
        raise ValueError("target_n must be >= 1")
    questions = _dedupe(pool)
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(questions)

    def attempt(q: Question) -> Optional[TraceSample]:
        scoped = ScopedBackend(backend, q.id)
        if not is_interdisciplinary(q, scoped, notes=notes):
            log.info("%s: not interdisciplinary", q.id)
            return None
        if not passes_difficulty(q, scoped):
            log.info("%s: below difficulty threshold", q.id)
            return None
        outcome = run_question(q, config, scoped, executor)
        if not q.ground_truth:
            return None
        report = is_valid_trace(outcome.trace, q.ground_truth)
        if not report.valid:
            log.info("%s: trace rejected (%s)", q.id, "; ".join(report.violations))
            return None
        return outcome.trace

    dataset: list[TraceSample] = []
    chunk = max(1, workers)
    with ThreadPoolExecutor(max_workers=chunk) as pool_exec:
        for start in range(0, len(questions), chunk):
            batch = questions[start:start + chunk]
            results = list(pool_exec.map(attempt, batch)) if chunk > 1 else [attempt(batch[0])]
            for trace in results:
                if trace is not None and len(dataset) < target_n:
                    dataset.append(trace)
            if len(dataset) == target_n:
                break
    if len(dataset) < target_n:
        warnings.warn(PoolExhausted(len(dataset), target_n), stacklevel=2)
    return dataset


# -- record formats ------------------------------------------------------------


def question_to_record(q: Question) -> dict:
    return {
        "id": q.id,
        "statement": q.statement,
        "category": q.category,
        "ground_truth": q.ground_truth,
        "source": q.source,
    }


def question_from_record(rec: dict) -> Question:
    return Question(
        id=str(rec["id"]),
        statement=rec["statement"],
        category=rec.get("category"),
        ground_truth=None if rec.get("ground_truth") is None else str(rec["ground_truth"]),
        source=rec.get("source"),
    )


def trace_to_record(trace: TraceSample) -> dict:
    return {
        "question": question_to_record(trace.question),
        "turns": [
            {
                "ordinal": t.ordinal,
                "role": t.agent.kind.value,
                "solver_index": t.agent.solver_index,
                "role_description": t.agent.role_description,
                "prompt": [m.to_dict() for m in t.prompt],
                "response": t.response,
                "budget": t.budget,
                "tokens_out": t.tokens_out,
                "tokens_in": t.tokens_in,
            }
            for t in trace.turns
        ],
        "final_answer": trace.final_answer,
        "validation": {
            "consensus": trace.consensus_reached,
            "format": trace.format_ok,
            "correct": trace.answer_correct,
        },
    }


def trace_from_record(rec: dict) -> TraceSample:
    turns = [
        TranscriptTurn(
            ordinal=t["ordinal"],
            agent=AgentRole(AgentKind(t["role"]), t.get("solver_index"), t.get("role_description")),
            prompt=tuple(ChatMessage(MessageRole(m["role"]), m["content"]) for m in t["prompt"]),
            response=t["response"],
            tokens_in=t.get("tokens_in", 0),
            tokens_out=t["tokens_out"],
            budget=t["budget"],
        )
        for t in rec["turns"]
    ]
    v = rec["validation"]
    return TraceSample(
        question=question_from_record(rec["question"]),
        turns=tuple(turns),
        final_answer=rec.get("final_answer"),
        consensus_reached=v["consensus"],
        format_ok=v["format"],
        answer_correct=v["correct"],
        valid=bool(v["consensus"] and v["format"] and v["correct"] is True),
    )


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False)


def export_m500(dataset: Sequence[TraceSample], path) -> int:
    for trace in dataset:
        if not trace.valid:
            raise InvalidTraceInExport(f"trace for {trace.question.id} is not valid")
    with Path(path).open("w", encoding="utf-8") as fh:
        for trace in dataset:
            fh.write(dumps_record(trace_to_record(trace)) + "\n")
    return len(dataset)


def import_m500(path) -> list[TraceSample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(trace_from_record(json.loads(line)))
    return out


@dataclass(frozen=True)
class SftPair:
    question_id: str
    ordinal: int
    input_messages: tuple[ChatMessage, ...]
    target: str


def export_sft_batches(dataset: Sequence[TraceSample]) -> list[list[SftPair]]:
    """One batch per question, pairs in generation order."""
    batches = []
    for trace in dataset:
        if not trace.valid:
            raise InvalidTraceInExport(f"trace for {trace.question.id} is not valid")
        ordinals = [t.ordinal for t in trace.turns]
        if ordinals != list(range(len(ordinals))):
            raise ValueError(f"trace for {trace.question.id} has out-of-order turns")
        batches.append(
            [SftPair(trace.question.id, t.ordinal, t.prompt, t.response) for t in trace.turns]
        )
    return batches


def write_sft(batches: Sequence[Sequence[SftPair]], path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for batch_index, batch in enumerate(batches):
            for pair in batch:
                rec = {
                    "question_id": pair.question_id,
                    "batch_index": batch_index,
                    "ordinal": pair.ordinal,
                    "messages": [m.to_dict() for m in pair.input_messages],
                    "target": pair.target,
                }
                fh.write(dumps_record(rec) + "\n")
                count += 1
    return count


def read_questions(path) -> list[Question]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(question_from_record(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad question record ({exc})") from exc
    return out
