"""A seeded stand-in for a reasoning model, for offline runs and sweeps.

The drafting solver gets the answer right with a probability that rises with
the per-call token budget. Critics agree exactly when the latest solution is
right, so every extra critic iteration is another chance at a correct
revision. The evaluator checks the boxed answer against the truth. All
replies are well formed, so runs exercise the protocol rather than the
parsers' fallbacks.
"""

from __future__ import annotations

import math
import random
from typing import Callable, Mapping, Optional

from .backend import ChatRequest, FunctionBackend
from .parsing import ParseError, extract_boxed


def saturating_success(budget: int, scale: float = 6000.0) -> float:
    return 1.0 - math.exp(-budget / scale)


def _think(body: str, reasoning: str = "Working through the problem.") -> str:
    return f"<think>\n{reasoning}\n</think>\n{body}"


class StochasticSolverAgent:
    """Callable ``ChatRequest -> str`` simulating every role.

    ``truths`` maps question ids (the scope prefix of request tags) to
    answers; unknown scopes use ``default_truth``.
    """

    def __init__(
        self,
        seed: int = 0,
        success: Callable[[int], float] = saturating_success,
        truths: Optional[Mapping[str, str]] = None,
        default_truth: str = "42",
        wrong_answer: str = "-1",
        probe_words: int = 1500,
    ):
        self.rng = random.Random(seed)
        self.success = success
        self.truths = dict(truths or {})
        self.default_truth = default_truth
        self.wrong_answer = wrong_answer
        self.probe_words = probe_words

    def _truth(self, tag: str) -> str:
        scope = tag.rsplit("/", 1)[0] if "/" in tag else ""
        return self.truths.get(scope, self.default_truth)

    def __call__(self, request: ChatRequest) -> str:
        tag = request.tag
        role = tag.rsplit("/", 1)[-1]
        truth = self._truth(tag)
        if role == "recruiter":
            experts = "\n".join(f"{i}. A specialist in field {i}, with expertise in method {i}" for i in range(1, 9))
            return _think(experts, "Choosing complementary experts.")
        if role in ("solver-draft", "solver-revision"):
            right = self.rng.random() < self.success(request.max_tokens)
            answer = truth if right else self.wrong_answer
            return _think(f"Putting the pieces together, the answer is \\boxed{{{answer}}}")
        if role == "solver-critic":
            history = request.messages[1].content if len(request.messages) > 2 else ""
            ok = _last_boxed(history) == truth
            return _think("I compared the final answers. " + ("[Agree]" if ok else "[Disagree]"))
        if role == "evaluator":
            ok = _last_boxed(request.messages[0].content) == truth
            if ok:
                return _think("### Correctness: 1\n### Confidence: 0.9\n### Advice: The answer checks out.")
            return _think("### Correctness: 0\n### Confidence: 0.8\n### Advice: Recheck the final computation.")
        if role == "ceo":
            budget = min(32000, request.max_tokens * 2)
            return _think(
                "### Decision: <Continue>\n### Recruit Number: 2\n"
                f"### Direction: Recheck the final computation.\n### Maximum Tokens: {budget}"
            )
        if role == "judge":
            return "Yes, several specialties are involved."
        if role == "probe":
            return " ".join(["step"] * self.probe_words) + f" \\boxed{{{truth}}}"
        raise ValueError(f"mock agent has no behaviour for tag {tag!r}")


def _last_boxed(text: str) -> Optional[str]:
    try:
        return extract_boxed(text)
    except ParseError:
        return None


def mock_backend(seed: int = 0, **kwargs) -> FunctionBackend:
    return FunctionBackend(StochasticSolverAgent(seed, **kwargs))
