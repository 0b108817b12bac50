"""Shared value types for the multi-agent reasoning engine.

Everything here is an immutable dataclass that validates itself on
construction. Behaviour lives in the other modules.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

TOKEN_BUDGET_MENU: tuple[int, ...] = (0, 2048, 4096, 8192, 16384, 32000)
NONZERO_BUDGETS: tuple[int, ...] = tuple(b for b in TOKEN_BUDGET_MENU if b > 0)
RECRUIT_BOUNDS: tuple[int, int] = (1, 4)


class AgentKind(str, enum.Enum):
    CEO = "CEO"
    EXPERT_RECRUITER = "ExpertRecruiter"
    PROBLEM_SOLVER = "ProblemSolver"
    EXECUTOR = "Executor"
    EVALUATOR = "Evaluator"


class MessageRole(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class ConsensusMark(str, enum.Enum):
    AGREE = "Agree"
    DISAGREE = "Disagree"
    MISSING = "Missing"


class Decision(str, enum.Enum):
    CONTINUE = "Continue"
    STOP = "Stop"


class SolveStatus(str, enum.Enum):
    SOLVED = "Solved"
    EXHAUSTED = "Exhausted"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class Question:
    id: str
    statement: str
    category: Optional[str] = None
    ground_truth: Optional[str] = None
    source: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("question id may not be empty")
        if not self.statement or not self.statement.strip():
            raise ValueError(f"question {self.id!r} has an empty statement")


@dataclass(frozen=True)
class RunConfig:
    """Orchestration knobs.

    ``total_agents`` counts Problem Solvers only; the recruiter, executor,
    evaluator and CEO are fixed overhead outside the count.
    """

    total_agents: int = 5
    critic_iterations: int = 3
    total_iterations: int = 2
    default_max_tokens: int = 32000
    token_budget_menu: tuple[int, ...] = TOKEN_BUDGET_MENU
    recruit_bounds: tuple[int, int] = RECRUIT_BOUNDS
    ceo_enabled: bool = False
    retry_limit: int = 3
    temperature: float = 0.0
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "token_budget_menu", tuple(self.token_budget_menu))
        object.__setattr__(self, "recruit_bounds", tuple(self.recruit_bounds))
        if self.total_agents < 2:
            raise ValueError("total_agents must be >= 2 (one drafting solver plus at least one critic)")
        if self.critic_iterations < 1:
            raise ValueError("critic_iterations must be >= 1")
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.default_max_tokens < 1:
            raise ValueError("default_max_tokens must be positive")
        if any(b < 0 for b in self.token_budget_menu) or list(self.token_budget_menu) != sorted(self.token_budget_menu):
            raise ValueError("token_budget_menu must be ascending non-negative integers")
        lo, hi = self.recruit_bounds
        if not 1 <= lo <= hi:
            raise ValueError(f"bad recruit_bounds {self.recruit_bounds}")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def nonzero_budgets(self) -> tuple[int, ...]:
        return tuple(b for b in self.token_budget_menu if b > 0)

    def to_dict(self) -> dict:
        return {
            "total_agents": self.total_agents,
            "critic_iterations": self.critic_iterations,
            "total_iterations": self.total_iterations,
            "default_max_tokens": self.default_max_tokens,
            "token_budget_menu": list(self.token_budget_menu),
            "recruit_bounds": list(self.recruit_bounds),
            "ceo_enabled": self.ceo_enabled,
            "retry_limit": self.retry_limit,
            "temperature": self.temperature,
            "model_id": self.model_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown run config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class AgentRole:
    kind: AgentKind
    solver_index: Optional[int] = None
    role_description: Optional[str] = None

    def __post_init__(self):
        is_solver = self.kind is AgentKind.PROBLEM_SOLVER
        if is_solver != (self.solver_index is not None):
            raise ValueError("solver_index is required for, and only for, ProblemSolver roles")
        if is_solver != (self.role_description is not None):
            raise ValueError("role_description is required for, and only for, ProblemSolver roles")
        if self.solver_index is not None and self.solver_index < 0:
            raise ValueError("solver_index must be >= 0")

    @property
    def label(self) -> str:
        if self.kind is AgentKind.PROBLEM_SOLVER:
            return f"ProblemSolver{self.solver_index}"
        return self.kind.value


@dataclass(frozen=True)
class ChatMessage:
    role: MessageRole
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", MessageRole(self.role))
        if not self.content and self.role is not MessageRole.ASSISTANT:
            raise ValueError(f"{self.role.value} message content may not be empty")

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}


def check_message_list(messages) -> None:
    """Raise unless ``messages`` is non-empty and starts with exactly one system message."""
    if not messages:
        raise ValueError("message list is empty")
    if messages[0].role is not MessageRole.SYSTEM:
        raise ValueError("message list must begin with a system message")
    if any(m.role is MessageRole.SYSTEM for m in messages[1:]):
        raise ValueError("message list must contain exactly one system message")


@dataclass(frozen=True)
class TranscriptTurn:
    ordinal: int
    agent: AgentRole
    prompt: tuple[ChatMessage, ...]
    response: str
    tokens_in: int
    tokens_out: int
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "prompt", tuple(self.prompt))
        if self.ordinal < 0:
            raise ValueError("ordinal must be >= 0")
        check_message_list(self.prompt)
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise ValueError("token counts must be non-negative")
        if self.budget < 1:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class CeoDirective:
    decision: Decision
    recruit_number: int
    direction: str
    max_tokens: int
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "decision", Decision(self.decision))
        object.__setattr__(self, "notes", tuple(self.notes))
        lo, hi = RECRUIT_BOUNDS
        if not lo <= self.recruit_number <= hi:
            raise ValueError(f"recruit_number {self.recruit_number} outside [{lo}, {hi}]")
        if self.max_tokens not in NONZERO_BUDGETS:
            raise ValueError(f"max_tokens {self.max_tokens} not in {NONZERO_BUDGETS}")


@dataclass(frozen=True)
class EvaluatorVerdict:
    correctness: int
    advice: str
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.correctness not in (0, 1):
            raise ValueError("correctness must be 0 or 1")
        if self.correctness == 0 and not self.advice.strip():
            raise ValueError("a negative verdict needs advice")


@dataclass(frozen=True)
class TraceSample:
    question: Question
    turns: tuple[TranscriptTurn, ...]
    final_answer: Optional[str] = None
    consensus_reached: bool = False
    format_ok: bool = False
    answer_correct: Optional[bool] = None
    valid: bool = False

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        for expected, turn in enumerate(self.turns):
            if turn.ordinal != expected:
                raise ValueError(
                    f"turn ordinals must be gap-free from 0; position {expected} has ordinal {turn.ordinal}"
                )
        if self.valid and not (self.consensus_reached and self.format_ok and self.answer_correct is True):
            raise ValueError("a valid trace needs consensus, format compliance and a correct answer")
        if self.format_ok and self.final_answer is None:
            raise ValueError("format-compliant traces must carry a final answer")

    @property
    def total_tokens(self) -> int:
        return sum(t.tokens_out for t in self.turns)


@dataclass(frozen=True)
class SolveOutcome:
    status: SolveStatus
    trace: TraceSample
    iterations_used: int
    total_tokens: int
    final_answer: Optional[str] = None
    cause: Optional[str] = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "status", SolveStatus(self.status))
        object.__setattr__(self, "notes", tuple(self.notes))
        if self.iterations_used < 0:
            raise ValueError("iterations_used must be >= 0")
