"""Grammars for agent responses.

Extraction is permissive and validation is strict. When a response has a
closed ``<think>...</think>`` block, the reasoning inside it is ignored for
answer/consensus/header extraction; an unterminated block means the whole
text is scanned (and :func:`validate_format` still flags it).

Headers (``Decision:``, ``Correctness:`` ...) match case-insensitively, with
or without leading ``#`` marks and with or without ``**`` bold markers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .domain import (
    NONZERO_BUDGETS,
    RECRUIT_BOUNDS,
    CeoDirective,
    ConsensusMark,
    Decision,
    EvaluatorVerdict,
)

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
BOXED = "\\boxed{"

_THINK_BLOCK_RE = re.compile(r"<think>.*?</think>", re.S)


class ParseError(ValueError):
    pass


class NoBoxedAnswer(ParseError):
    pass


class UnbalancedBraces(ParseError):
    pass


class MalformedVerdict(ParseError):
    pass


class MalformedDirective(ParseError):
    pass


class RosterTooShort(ParseError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"found {found} roster entries, expected {expected}")
        self.found = found
        self.expected = expected


def strip_think(text: str) -> str:
    """Drop closed think blocks; return the text unchanged if none is closed."""
    if THINK_OPEN in text and THINK_CLOSE in text.split(THINK_OPEN, 1)[1]:
        return _THINK_BLOCK_RE.sub("", text)
    return text


def extract_boxed(text: str) -> str:
    """Content of the last ``\\boxed{...}``, nested braces kept verbatim."""
    scope = strip_think(text)
    start = scope.rfind(BOXED)
    if start < 0:
        raise NoBoxedAnswer("no \\boxed{...} answer found")
    i = start + len(BOXED)
    depth = 1
    for j in range(i, len(scope)):
        c = scope[j]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return scope[i:j].strip()
    raise UnbalancedBraces("\\boxed{ is never closed")


@dataclass(frozen=True)
class FormatReport:
    has_think_block: bool
    think_closed: bool
    has_boxed: bool
    answer_bearing: bool
    violations: tuple[str, ...] = field(default=())

    @property
    def format_ok(self) -> bool:
        return self.has_think_block and self.think_closed and (self.has_boxed or not self.answer_bearing)


def validate_format(text: str, answer_bearing: bool) -> FormatReport:
    has_think = THINK_OPEN in text
    closed = has_think and THINK_CLOSE in text.split(THINK_OPEN, 1)[1]
    try:
        extract_boxed(text)
        has_boxed = True
    except ParseError:
        has_boxed = False
    violations = []
    if not has_think:
        violations.append("missing_think_block")
    elif not closed:
        violations.append("unclosed_think_block")
    if answer_bearing and not has_boxed:
        violations.append("missing_boxed_answer")
    return FormatReport(has_think, closed, has_boxed, answer_bearing, tuple(violations))


_TRAILING_MARKUP = " \t\r\n*_`"


def detect_consensus(text: str) -> ConsensusMark:
    tail = strip_think(text).rstrip(_TRAILING_MARKUP)
    if tail.endswith("[Agree]"):
        return ConsensusMark.AGREE
    if tail.endswith("[Disagree]"):
        return ConsensusMark.DISAGREE
    return ConsensusMark.MISSING


def _header_re(name: str) -> re.Pattern:
    return re.compile(
        r"^[ \t]*(?:#+[ \t]*)?(?:\*\*|__)?[ \t]*" + name + r"[ \t]*(?:\*\*|__)?[ \t]*:[ \t]*(?:\*\*|__)?[ \t]*(.*)$",
        re.I | re.M,
    )


_ANY_HEADER_RE = re.compile(
    r"^[ \t]*(?:#+[ \t]*)?(?:\*\*|__)?[ \t]*[A-Za-z][A-Za-z ]{0,30}?[ \t]*(?:\*\*|__)?[ \t]*:", re.M
)


def _section(text: str, name: str):
    """Value of header ``name``: rest of its line plus continuation lines up to the next header."""
    m = _header_re(name).search(text)
    if m is None:
        return None
    first = m.group(1)
    rest = text[m.end():]
    nxt = _ANY_HEADER_RE.search(rest)
    body = rest[: nxt.start()] if nxt else rest
    value = (first + body).strip()
    return value.strip("*_ \t").strip()


_CORRECTNESS_RE = _header_re("correctness")
_INT_RE = re.compile(r"-?\d[\d,]*")
_FLOAT_RE = re.compile(r"-?\d+(?:\.\d+)?")
_INLINE_ADVICE_RE = re.compile(r"(?:advice|response)[ \t]*(?:\*\*|__)?[ \t]*:[ \t]*(?:\*\*|__)?(.*)", re.I | re.S)


def parse_evaluator(text: str) -> EvaluatorVerdict:
    scope = strip_think(text)
    correctness = None
    for m in _CORRECTNESS_RE.finditer(scope):
        v = re.match(r"[\s*_<(\[]*([01])(?![\d.])", m.group(1))
        if v:
            correctness = int(v.group(1))
            break
    if correctness is None:
        raise MalformedVerdict("no 'Correctness: 0|1' header found")

    confidence = None
    conf_text = _section(scope, "confidence")
    if conf_text:
        c = _FLOAT_RE.search(conf_text)
        if c:
            confidence = float(c.group(0))

    advice = _section(scope, "advice")
    if advice is None:
        advice = _section(scope, "response")
    if advice is None:
        inline = _INLINE_ADVICE_RE.search(scope)
        if inline:
            advice = inline.group(1).strip("*_ \t").strip()
    if not advice:
        # no advice header: everything that is not the verdict/confidence lines
        lines = [
            ln for ln in scope.splitlines()
            if not _header_re("correctness").match(ln) and not _header_re("confidence").match(ln)
        ]
        advice = "\n".join(lines).strip()
    if correctness == 0 and not advice:
        raise MalformedVerdict("negative verdict without advice")
    return EvaluatorVerdict(correctness, advice or "", confidence)


def _snap_budget(value: int) -> int:
    return min(NONZERO_BUDGETS, key=lambda b: (abs(b - value), -b))


def parse_ceo(text: str) -> CeoDirective:
    """Parse the CEO's four headers, clamping recruits and snapping budgets onto the menu."""
    scope = strip_think(text)
    notes = []

    raw_decision = _section(scope, "decision")
    if raw_decision is None:
        raise MalformedDirective("missing 'Decision' header")
    word = re.match(r"[\s<*_\[]*([A-Za-z]+)", raw_decision)
    if not word or word.group(1).lower() not in ("continue", "stop"):
        raise MalformedDirective(f"unreadable decision {raw_decision[:40]!r}")
    decision = Decision.CONTINUE if word.group(1).lower() == "continue" else Decision.STOP

    raw_tokens = _section(scope, r"maximum\s+tokens")
    if raw_tokens is None:
        raise MalformedDirective("missing 'Maximum Tokens' header")
    t = _INT_RE.search(raw_tokens)
    if t is None:
        raise MalformedDirective(f"unreadable maximum tokens {raw_tokens[:40]!r}")
    try:
        requested = int(t.group(0).replace(",", ""))
    except ValueError:
        raise MalformedDirective(f"unreadable maximum tokens {raw_tokens[:40]!r}") from None
    max_tokens = _snap_budget(requested)
    if max_tokens != requested:
        notes.append(f"max_tokens {requested} snapped to {max_tokens}")

    lo, hi = RECRUIT_BOUNDS
    recruit = lo
    raw_recruit = _section(scope, r"recruit\s+number")
    r = _INT_RE.search(raw_recruit) if raw_recruit else None
    if r is None:
        if decision is Decision.CONTINUE:
            notes.append(f"recruit number missing; using {lo}")
    else:
        try:
            asked = int(r.group(0).replace(",", ""))
        except ValueError:
            asked = lo
        recruit = min(max(asked, lo), hi)
        if recruit != asked:
            notes.append(f"recruit_number {asked} clamped to {recruit}")

    direction = _section(scope, "direction") or ""
    if decision is Decision.STOP:
        direction = ""
    return CeoDirective(decision, recruit, direction, max_tokens, tuple(notes))


_ITEM_RE = re.compile(r"^[ \t]*(?:[-*][ \t]+)?(\d+)[.)][ \t]+(.*\S)[ \t]*$")


def parse_roster(text: str, expected: int) -> list[str]:
    """First ``expected`` numbered-list items ("1. ..." or "1) ...") after the think block."""
    if expected < 1:
        raise ValueError("expected must be >= 1")
    items: list[str] = []
    current = None
    for line in strip_think(text).splitlines():
        m = _ITEM_RE.match(line)
        if m:
            if current is not None:
                items.append(current)
            current = m.group(2).strip()
        elif current is not None:
            if line.strip():
                current = f"{current} {line.strip()}"
            else:
                items.append(current)
                current = None
    if current is not None:
        items.append(current)
    items = [re.sub(r"\*\*|__", "", i).strip() for i in items]
    items = [i for i in items if i]
    if len(items) < expected:
        raise RosterTooShort(len(items), expected)
    return items[:expected]


FORMAT_REMINDERS = {
    "recruiter": "Reply with a numbered list (1., 2., ...) of exactly {n} expert descriptions.",
    "critic": 'End your response with the special token "[Agree]" or "[Disagree]".',
    "evaluator": "Start your verdict with the line '### Correctness: 0' or '### Correctness: 1', then '### Advice:'.",
    "ceo": "Answer using exactly the four headers: ### Decision, ### Recruit Number, ### Direction, ### Maximum Tokens.",
}
