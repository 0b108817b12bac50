"""The multi-agent state machine.

One round runs recruiter -> drafting solver -> critic iterations (with
revisions by the drafting solver after any disagreement) -> executor ->
evaluator. :func:`solve` repeats rounds with fixed settings until the
evaluator accepts a solution or ``total_iterations`` is reached.
:func:`solve_with_ceo` adds a CEO turn after each rejected evaluation that
can stop the run, or reset the solver count, discussion direction and
per-call token budget for the next round.

Malformed agent output is re-asked once with a one-line format reminder.
A second failure falls back per role: critic -> Disagree, evaluator ->
correctness 0, CEO -> continue with previous settings, recruiter -> abort.
"""

from __future__ import annotations

import logging
import re
import subprocess
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from .backend import BackendError, ChatRequest
from .domain import (
    AgentKind,
    AgentRole,
    ChatMessage,
    ConsensusMark,
    Decision,
    EvaluatorVerdict,
    MessageRole,
    Question,
    RunConfig,
    SolveOutcome,
    SolveStatus,
    TraceSample,
    TranscriptTurn,
)
from .parsing import (
    FORMAT_REMINDERS,
    ParseError,
    detect_consensus,
    parse_ceo,
    parse_evaluator,
    parse_roster,
    strip_think,
)
from .prompts import TemplateId, render

log = logging.getLogger(__name__)

NO_ADVICE = "No advice yet."
UNPARSEABLE_VERDICT = "unparseable verdict"

TAG_RECRUITER = "recruiter"
TAG_DRAFT = "solver-draft"
TAG_REVISION = "solver-revision"
TAG_CRITIC = "solver-critic"
TAG_EVALUATOR = "evaluator"
TAG_CEO = "ceo"


class ExecutorError(Exception):
    pass


class ExecutorTimeout(ExecutorError):
    pass


class ExecutorFailure(ExecutorError):
    def __init__(self, status: int, stderr: str = ""):
        super().__init__(f"executor exited with status {status}: {stderr.strip()[:200]}")
        self.status = status
        self.stderr = stderr


class Executor(Protocol):
    def execute(self, solution: str) -> str: ...


class PassthroughExecutor:
    def execute(self, solution: str) -> str:
        return solution


_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.S)


def extract_code_blocks(text: str) -> list[str]:
    return [m.group(2) for m in _FENCE_RE.finditer(strip_think(text))]


class CommandExecutor:
    """Runs fenced code blocks through an external command (code on stdin, output on stdout).

    No sandboxing: only point this at code you are willing to run.
    """

    def __init__(self, command: Sequence[str] = ("python3", "-"), timeout: float = 5.0):
        self.command = list(command)
        self.timeout = timeout

    def run_code(self, code: str) -> str:
        try:
            proc = subprocess.run(
                self.command, input=code, capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise ExecutorTimeout(f"execution exceeded {self.timeout}s") from exc
        if proc.returncode != 0:
            raise ExecutorFailure(proc.returncode, proc.stderr)
        return proc.stdout

    def execute(self, solution: str) -> str:
        blocks = extract_code_blocks(solution)
        if not blocks:
            return solution
        output = self.run_code("\n\n".join(blocks))
        return f"{solution}\n\nExecution output:\n{output}"


def run_executor(solution: str, runner: Optional[Executor] = None) -> str:
    return (runner or PassthroughExecutor()).execute(solution)


@dataclass(frozen=True)
class ResourceLedger:
    round_index: int
    rounds_max: int
    tokens_spent: int
    solver_count: int
    current_budget: int

    def summary(self) -> str:
        return (
            f"round {self.round_index} of {self.rounds_max}; solvers {self.solver_count}; "
            f"tokens spent {self.tokens_spent}; current budget {self.current_budget}"
        )


class _Aborted(Exception):
    pass


def _as_subject(description: str) -> str:
    """'A mathematician ...' -> 'a mathematician ...' so it reads after 'You are'."""
    m = re.match(r"(A|An|The)\b", description)
    if m:
        return m.group(1).lower() + description[len(m.group(1)):]
    return description


def _history_message(history: list[tuple[str, str]]) -> ChatMessage:
    body = "\n\n".join(f"[{speaker}]: {text}" for speaker, text in history)
    return ChatMessage(MessageRole.USER, f"Here is the chat history:\n<history>\n{body}\n</history>")


class _Run:
    def __init__(self, question: Question, config: RunConfig, backend, executor: Optional[Executor]):
        self.q = question
        self.config = config
        self.backend = backend
        self.executor = executor or PassthroughExecutor()
        self.turns: list[TranscriptTurn] = []
        self.notes: list[str] = []
        self.reasks = 0
        self.budget = config.default_max_tokens
        self.latest_solution: Optional[str] = None

    # -- plumbing -----------------------------------------------------------

    @property
    def tokens_spent(self) -> int:
        return sum(t.tokens_out for t in self.turns)

    def call(self, role: AgentRole, messages: list[ChatMessage], tag: str) -> str:
        request = ChatRequest(
            tuple(messages), self.budget, self.config.temperature, self.config.model_id, tag
        )
        try:
            response = self.backend.complete(request)
        except BackendError as exc:
            raise _Aborted(f"{type(exc).__name__}: {exc}") from exc
        self.turns.append(
            TranscriptTurn(
                ordinal=len(self.turns),
                agent=role,
                prompt=tuple(messages),
                response=response.content,
                tokens_in=response.tokens_in,
                tokens_out=response.tokens_out,
                budget=self.budget,
            )
        )
        return response.content

    def call_parsed(self, role, messages, tag, parse, reminder):
        """Call, parse, and on a parse error re-ask once. Returns (value or None, last text)."""
        text = self.call(role, messages, tag)
        try:
            return parse(text), text
        except ParseError as first:
            log.info("%s output unparseable (%s); re-asking", role.label, first)
        self.reasks += 1
        text = self.call(role, list(messages) + [ChatMessage(MessageRole.USER, reminder)], tag)
        try:
            return parse(text), text
        except ParseError as second:
            self.notes.append(f"turn {len(self.turns) - 1}: {role.label} unparseable after re-ask ({second})")
            return None, text

    # -- stages -------------------------------------------------------------

    def recruit(self, n: int, advice: str) -> list[str]:
        role = AgentRole(AgentKind.EXPERT_RECRUITER)
        messages = render(
            TemplateId.RECRUITER_USER,
            {"task_description": self.q.statement, "cnt_critic_agents": str(n), "advice": advice},
        )
        roster, _ = self.call_parsed(
            role, messages, TAG_RECRUITER, lambda t: parse_roster(t, n),
            FORMAT_REMINDERS["recruiter"].format(n=n),
        )
        if roster is None:
            raise _Aborted(f"recruiter did not produce {n} experts")
        return roster

    def solver_turn(self, descs, history, advice, tag) -> str:
        role = AgentRole(AgentKind.PROBLEM_SOLVER, 0, descs[0])
        system, user = render(
            TemplateId.SOLVER_DRAFT_USER,
            {"task_description": self.q.statement, "role_description": _as_subject(descs[0]), "advice": advice},
        )
        messages = [system] + ([_history_message(history)] if history else []) + [user]
        text = self.call(role, messages, tag)
        self.latest_solution = strip_think(text).strip()
        history.append((descs[0], self.latest_solution))
        return text

    def critic_turn(self, index, descs, history, advice) -> ConsensusMark:
        role = AgentRole(AgentKind.PROBLEM_SOLVER, index, descs[index])
        system, user = render(
            TemplateId.SOLVER_CRITIC_USER,
            {"task_description": self.q.statement, "role_description": _as_subject(descs[index]), "advice": advice},
        )
        messages = [system, _history_message(history), user]

        def parse(text):
            mark = detect_consensus(text)
            if mark is ConsensusMark.MISSING:
                raise ParseError("no [Agree]/[Disagree] token at the end")
            return mark

        mark, text = self.call_parsed(role, messages, TAG_CRITIC, parse, FORMAT_REMINDERS["critic"])
        history.append((descs[index], strip_think(text).strip()))
        return mark or ConsensusMark.DISAGREE

    def evaluate(self, descs, solution_context) -> tuple[EvaluatorVerdict, str]:
        role = AgentRole(AgentKind.EVALUATOR)
        messages = render(
            TemplateId.EVALUATOR_USER,
            {
                "all_role_description": "\n\n".join(descs),
                "task_description": self.q.statement,
                "solution": solution_context,
            },
        )
        verdict, text = self.call_parsed(role, messages, TAG_EVALUATOR, parse_evaluator, FORMAT_REMINDERS["evaluator"])
        if verdict is None:
            verdict = EvaluatorVerdict(0, UNPARSEABLE_VERDICT)
        return verdict, text

    def ceo(self, round_index, feedback):
        role = AgentRole(AgentKind.CEO)
        ledger = ResourceLedger(
            round_index, self.config.total_iterations, self.tokens_spent, self.solver_count, self.budget
        )
        messages = render(
            TemplateId.CEO_USER,
            {
                "task_description": self.q.statement,
                "current_solution": self.latest_solution or "",
                "evaluation_feedback": feedback,
                "current_resources": ledger.summary(),
            },
        )
        directive, _ = self.call_parsed(role, messages, TAG_CEO, parse_ceo, FORMAT_REMINDERS["ceo"])
        if directive is not None:
            self.notes.extend(f"turn {len(self.turns) - 1}: {n}" for n in directive.notes)
        return directive

    def round(self, advice: str) -> EvaluatorVerdict:
        n = self.solver_count
        descs = self.recruit(n, advice)
        history: list[tuple[str, str]] = []
        self.solver_turn(descs, history, advice, TAG_DRAFT)
        for k in range(1, self.config.critic_iterations + 1):
            marks = [self.critic_turn(i, descs, history, advice) for i in range(1, n)]
            if all(m is ConsensusMark.AGREE for m in marks):
                break
            self.solver_turn(descs, history, advice, TAG_REVISION)
        try:
            context = run_executor(self.latest_solution or "", self.executor)
        except ExecutorError as exc:
            context = f"{self.latest_solution}\n\nExecution failed: {exc}"
            self.notes.append(f"executor: {exc}")
        verdict, self.last_feedback = self.evaluate(descs, context)
        return verdict

    # -- drivers ------------------------------------------------------------

    def run(self, with_ceo: bool) -> SolveOutcome:
        self.solver_count = self.config.total_agents
        advice = NO_ADVICE
        status = SolveStatus.EXHAUSTED
        cause = None
        rounds = 0
        try:
            for r in range(1, self.config.total_iterations + 1):
                rounds = r
                verdict = self.round(advice)
                if verdict.correctness == 1:
                    status = SolveStatus.SOLVED
                    break
                advice = verdict.advice
                if not with_ceo:
                    continue
                directive = self.ceo(r, strip_think(self.last_feedback).strip())
                if directive is None:
                    self.notes.append(f"round {r}: CEO directive unusable; continuing with previous settings")
                    continue
                if directive.decision is Decision.STOP:
                    self.notes.append(f"round {r}: CEO chose Stop")
                    break
                self.solver_count = max(2, directive.recruit_number)
                if directive.recruit_number < 2:
                    self.notes.append(f"round {r}: recruit number {directive.recruit_number} raised to 2 solvers")
                if directive.direction:
                    advice = directive.direction
                self.budget = directive.max_tokens
        except _Aborted as exc:
            status = SolveStatus.ABORTED
            cause = str(exc)
            log.warning("run for %s aborted: %s", self.q.id, cause)

        self._check_bound(with_ceo)
        trace = build_trace(self.q, self.turns)
        final = trace.final_answer
        return SolveOutcome(
            status=status,
            trace=trace,
            iterations_used=rounds,
            total_tokens=self.tokens_spent,
            final_answer=final,
            cause=cause,
            notes=tuple(self.notes),
        )

    def _check_bound(self, with_ceo: bool) -> None:
        c = self.config
        n_max = max(c.total_agents, c.recruit_bounds[1]) if with_ceo else c.total_agents
        bound = turn_bound(c.total_iterations, c.critic_iterations, n_max, with_ceo) + self.reasks
        if len(self.turns) > bound:
            raise RuntimeError(f"turn count {len(self.turns)} exceeds bound {bound}")


def turn_bound(total_iterations: int, critic_iterations: int, solver_count: int, ceo_enabled: bool) -> int:
    """Maximum number of turns a run can take, excluding format re-asks."""
    per_round = 1 + 1 + critic_iterations * solver_count + 1
    return total_iterations * per_round + (total_iterations if ceo_enabled else 0)


def build_trace(question: Question, turns: Sequence[TranscriptTurn]) -> TraceSample:
    from .datapipe import assess_turns

    report = assess_turns(turns, question.ground_truth)
    return TraceSample(
        question=question,
        turns=tuple(turns),
        final_answer=report.final_answer,
        consensus_reached=report.consensus_reached,
        format_ok=report.format_ok,
        answer_correct=report.answer_correct if question.ground_truth else None,
        valid=bool(question.ground_truth) and report.valid,
    )


def solve(question: Question, config: RunConfig, backend, executor: Optional[Executor] = None) -> SolveOutcome:
    """Fixed-configuration run; every call uses ``config.default_max_tokens``."""
    if config.ceo_enabled:
        raise ValueError("solve() runs the fixed loop; use solve_with_ceo() when ceo_enabled is set")
    return _Run(question, config, backend, executor).run(with_ceo=False)


def solve_with_ceo(question: Question, config: RunConfig, backend, executor: Optional[Executor] = None) -> SolveOutcome:
    if not config.ceo_enabled:
        raise ValueError("solve_with_ceo() needs config.ceo_enabled")
    return _Run(question, config, backend, executor).run(with_ceo=True)


def run_question(question: Question, config: RunConfig, backend, executor: Optional[Executor] = None) -> SolveOutcome:
    """Dispatch to the CEO or fixed loop according to ``config.ceo_enabled``."""
    runner = solve_with_ceo if config.ceo_enabled else solve
    return runner(question, config, backend, executor)

