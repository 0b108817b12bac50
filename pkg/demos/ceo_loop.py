"""Watch the CEO raise the budget and change the team after a rejected round.

A scripted backend answers wrongly in round one, the evaluator rejects, the
CEO asks for more tokens, and round two succeeds.
"""

from agentcollab import Question, RunConfig, ScriptEntry, ScriptedBackend, run_question


def think(body):
    return f"<think>\nworking\n</think>\n{body}"


def entries(*pairs):
    counts = {}
    for tag, content in pairs:
        i = counts.get(tag, 0)
        counts[tag] = i + 1
        yield ScriptEntry(tag, i, content)


ROSTER = think("1. A geometer, with expertise in similar triangles\n2. An algebraist, with expertise in ratios\n"
              "3. A checker, with expertise in verification")

SCRIPT = [
    ("recruiter", ROSTER),
    ("solver-draft", think("The area ratio gives \\boxed{180}")),
    ("solver-critic", think("The ratio was inverted. [Disagree]")),
    ("solver-revision", think("Still \\boxed{180}")),
    ("evaluator", think("### Correctness: 0\n### Advice: Recheck the area ratio.")),
    ("ceo", think("### Decision: <Continue>\n### Recruit Number: 3\n"
                  "### Direction: Invert the ratio.\n### Maximum Tokens: 8192")),
    ("recruiter", ROSTER),
    ("solver-draft", think("Inverting the ratio gives \\boxed{181}")),
    ("solver-critic", think("Matches my answer. [Agree]")),
    ("solver-critic", think("Matches my answer. [Agree]")),
    ("evaluator", think("### Correctness: 1\n### Advice: none")),
]


def main():
    backend = ScriptedBackend(list(entries(*SCRIPT)))
    config = RunConfig(total_agents=2, critic_iterations=1, total_iterations=2, default_max_tokens=2048, ceo_enabled=True)
    outcome = run_question(Question("trap", "Trapezoid problem", ground_truth="181"), config, backend)
    for turn in outcome.trace.turns:
        print(f"turn {turn.ordinal:>2}: {turn.agent.label:<24} budget {turn.budget}")
    print(f"status {outcome.status.value} after {outcome.iterations_used} rounds, answer {outcome.final_answer}")


if __name__ == "__main__":
    main()
