"""Sweep the per-call token budget with the mock model and print the curve."""

from agentcollab import Question, RunConfig
from agentcollab.bench import SweepAxis, sweep
from agentcollab.mocks import mock_backend


def main():
    questions = [Question(f"q{i}", f"Problem {i}", ground_truth="42") for i in range(20)]
    base = RunConfig(total_agents=3, critic_iterations=2, total_iterations=1)
    rows = sweep(questions, SweepAxis.MAX_TOKENS, [1024, 2048, 4096, 8192, 16384], base, mock_backend(seed=0))
    print(f"{'budget':>7} {'accuracy':>9} {'tokens':>8} {'turns':>6}")
    for r in rows:
        print(f"{r.value:>7} {r.accuracy:>9.2f} {r.mean_tokens:>8.1f} {r.mean_turns:>6.1f}")


if __name__ == "__main__":
    main()
