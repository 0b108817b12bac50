"""Small builders shared by the test modules."""

from agentcollab.backend import ScriptEntry, ScriptedBackend


def think(body, reasoning="Let me check."):
    return f"<think>\n{reasoning}\n</think>\n{body}"


def roster(n):
    return think("\n".join(f"{i}. A specialist in area {i}, with expertise in topic {i}" for i in range(1, n + 1)))


def script(*pairs):
    """ScriptedBackend from (tag, content) pairs, indexing each tag in order."""
    counts = {}
    entries = []
    for tag, content in pairs:
        i = counts.get(tag, 0)
        counts[tag] = i + 1
        entries.append(ScriptEntry(tag, i, content))
    return ScriptedBackend(entries)


DRAFT_OK = think("The answer is \\boxed{181}")
DRAFT_BAD = think("The answer is \\boxed{180}")
AGREE = think("Same final answer. [Agree]")
DISAGREE = think("The final answers differ. [Disagree]")
VERDICT_OK = think("### Correctness: 1\n### Advice: none needed")
VERDICT_BAD = think("### Correctness: 0\n### Advice: Recheck the area ratio.")
CEO_STOP = think("### Decision: <Stop>\n### Recruit Number: 1\n### Direction: none\n### Maximum Tokens: 2048")


def ceo_continue(recruit=2, tokens=8192, direction="Re-examine the configuration."):
    return think(
        f"### Decision: <Continue>\n### Recruit Number: {recruit}\n"
        f"### Direction: {direction}\n### Maximum Tokens: {tokens}"
    )


def protocol_fn(valid_ids=(), judge="Yes", probe_words=2000):
    """``fn(request)`` answering every tag; questions in ``valid_ids`` get a valid trace."""
    valid_ids = set(valid_ids)

    def fn(request):
        scope, _, role = request.tag.rpartition("/")
        if role == "judge":
            return judge
        if role == "probe":
            return " ".join(["step"] * probe_words)
        if role == "recruiter":
            return roster(4)
        if role in ("solver-draft", "solver-revision"):
            return DRAFT_OK if scope in valid_ids else DRAFT_BAD
        if role == "solver-critic":
            return AGREE
        if role == "evaluator":
            return VERDICT_OK
        raise AssertionError(role)

    return fn


# PASS/FAIL lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE = []
