"""Replay the recorded trapezoid transcript and check it against the filters.

Run from the repository root:  python3 demos/replay_golden.py
"""

import json
from pathlib import Path

from agentcollab import RunConfig, is_valid_trace, load_script, run_question
from agentcollab.datapipe import question_from_record

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    question = question_from_record(json.loads((FIXTURES / "golden_question.json").read_text()))
    backend = load_script(FIXTURES / "golden.jsonl")
    outcome = run_question(question, RunConfig(total_agents=2, critic_iterations=1, total_iterations=1), backend)

    for turn in outcome.trace.turns:
        print(f"turn {turn.ordinal}: {turn.agent.label:<24} {turn.tokens_out:>5} tokens")
    report = is_valid_trace(outcome.trace, question.ground_truth)
    print(f"status {outcome.status.value}, answer {outcome.final_answer}, kept in dataset: {report.valid}")


if __name__ == "__main__":
    main()
