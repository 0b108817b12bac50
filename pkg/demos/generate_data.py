"""Build a small dataset offline with the seeded mock model.

Writes m500.jsonl and sft.jsonl into a temporary directory and prints a summary.
"""

import tempfile
from pathlib import Path

from agentcollab import Question, RunConfig, generate_dataset
from agentcollab.datapipe import export_m500, export_sft_batches, write_sft
from agentcollab.mocks import mock_backend


def main():
    pool = [Question(f"q{i}", f"Problem number {i}", ground_truth=str(i * 7)) for i in range(12)]
    backend = mock_backend(seed=3, truths={q.id: q.ground_truth for q in pool})
    config = RunConfig(total_agents=3, critic_iterations=2, total_iterations=1, default_max_tokens=4096)
    dataset = generate_dataset(pool, 5, config, backend)

    out = Path(tempfile.mkdtemp(prefix="agentcollab-"))
    kept = export_m500(dataset, out / "m500.jsonl")
    pairs = write_sft(export_sft_batches(dataset), out / "sft.jsonl")
    print(f"kept {kept} traces ({', '.join(t.question.id for t in dataset)}); {pairs} SFT pairs in {out}")


if __name__ == "__main__":
    main()
