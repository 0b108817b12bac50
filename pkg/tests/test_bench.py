import csv
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentcollab.backend import FunctionBackend, ScriptEntry, ScriptedBackend
from agentcollab.bench import (
    BenchItem,
    SweepAxis,
    check_axis_values,
    grade_code,
    grade_concept_coverage,
    grade_exact,
    normalize_answer,
    read_bench_items,
    run_benchmark,
    sweep,
    write_report,
    write_sweep_csv,
)
from agentcollab.domain import Question, RunConfig
from agentcollab.mocks import StochasticSolverAgent, mock_backend
from agentcollab.orchestrator import CommandExecutor
from helpers import AGREE, DRAFT_OK, VERDICT_OK, roster, think

SMALL = RunConfig(total_agents=2, critic_iterations=1, total_iterations=1)
CONCEPTS = [
    "dog", "frisbee", "catch", "throw", "park", "grass", "run", "jump", "ball", "tree",
    "child", "laugh", "sun", "bench", "leash", "bark", "owner", "fetch", "wind", "kite",
]
PARAGRAPH = (
    "In the park a child throws a frisbee and her dogs run across the grass to catch it. "
    "One dog jumps over a ball near the tree while a neighbour laughs on a bench. "
    "Another barks and tugs at its leash."
)

# -- graders -------------------------------------------------------------------


@pytest.mark.parametrize(
    "a,b,expected",
    [("181", "181", True), ("181.0", "181", True), ("113", "23", False), ("23", "113", False),
     ("\\frac{362}{2}", "181", True), ("$181$", " 181 ", True), ("\\dfrac{1}{2}", "0.5", True),
     ("1/2", "\\tfrac{1}{2}", True), ("x + 1", "x  +  1", True), ("x+1", "x + 1", False), ("-3", "-3.00", True)],
)
def test_grade_exact(a, b, expected):
    assert grade_exact(a, b) is expected


_answers = st.one_of(
    st.integers(-10**6, 10**6).map(str),
    st.decimals(-1000, 1000, places=3, allow_nan=False, allow_infinity=False).map(str),
    st.text(max_size=12),
    st.tuples(st.integers(-50, 50), st.integers(1, 50)).map(lambda t: f"\\frac{{{t[0]}}}{{{t[1]}}}"),
)


@given(_answers, _answers)
def test_grade_exact_symmetric(a, b):
    assert grade_exact(a, b) == grade_exact(b, a)


@given(_answers)
def test_grade_exact_idempotent_normalization(a):
    n = normalize_answer(a)
    assert normalize_answer(n) == n
    assert grade_exact(a, n)
    assert grade_exact(a, a)


def test_concept_coverage_counts():
    present = [c for c in CONCEPTS if grade_concept_coverage(PARAGRAPH, [c]) == 1.0]
    assert len(present) == 15
    assert grade_concept_coverage(PARAGRAPH, CONCEPTS) == 0.75
    assert grade_concept_coverage(PARAGRAPH + " The owner and friends fetch a kite in the wind and the sun.", CONCEPTS) == 1.0
    assert grade_concept_coverage("", CONCEPTS) == 0.0


def test_concept_matching_rules():
    assert grade_concept_coverage("two dogs", ["dog"]) == 1.0
    assert grade_concept_coverage("the puppies played", ["puppy"]) == 1.0
    assert grade_concept_coverage("doghouse", ["dog"]) == 0.0
    assert grade_concept_coverage("Ice Cream trucks", ["ice cream"]) == 1.0
    with pytest.raises(ValueError):
        grade_concept_coverage("x", [])


@given(st.text(max_size=80), st.lists(st.sampled_from(CONCEPTS), min_size=1, max_size=6), st.sampled_from(CONCEPTS))
def test_concept_coverage_monotone(text, concepts, extra):
    before = grade_concept_coverage(text, concepts)
    after = grade_concept_coverage(text + f" A sentence about the {extra}.", concepts)
    assert 0.0 <= before <= after <= 1.0


RUNNER = CommandExecutor((sys.executable, "-"), timeout=5)


def test_grade_code_pass_and_fail():
    program = "def add(a, b):\n    return a + b\n"
    assert grade_code(program, ["assert add(2, 3) == 5"], RUNNER)
    notes = []
    assert not grade_code(program, ["assert add(2, 3) == 6"], RUNNER, notes)
    assert notes[0].startswith("failed")


def test_grade_code_timeout_note():
    notes = []
    quick = CommandExecutor((sys.executable, "-"), timeout=0.5)
    assert not grade_code("while True:\n    pass\n", ["pass"], quick, notes)
    assert notes[0].startswith("timeout")


# -- benchmark runner ------------------------------------------------------------


def _solved_script(*ids):
    entries = []
    for qid in ids:
        for tag, text in (("recruiter", roster(2)), ("solver-draft", DRAFT_OK), ("solver-critic", AGREE),
                          ("evaluator", VERDICT_OK)):
            entries.append(ScriptEntry(f"{qid}/{tag}", 0, text))
    return ScriptedBackend(entries)


QS = [Question("b", "Second problem", ground_truth="181"), Question("a", "First problem", ground_truth="181")]


def test_benchmark_all_solved():
    report = run_benchmark(QS, SMALL, _solved_script("a", "b"), task_name="two")
    assert report.accuracy == 1.0
    assert report.n_questions == 2
    assert [r.id for r in report.per_question] == ["a", "b"]
    assert all(r.turns == 4 and r.tokens > 0 for r in report.per_question)
    assert report.config_snapshot == SMALL


def test_benchmark_counts_aborted_as_wrong():
    report = run_benchmark(QS, SMALL, _solved_script("a"))
    assert report.accuracy == 0.5
    aborted = report.per_question[1]
    assert (aborted.id, aborted.correct, aborted.status) == ("b", False, "Aborted")
    assert aborted.note.startswith("aborted: ScriptExhausted")


def test_benchmark_preconditions():
    with pytest.raises(ValueError):
        run_benchmark([], SMALL, _solved_script())
    with pytest.raises(ValueError):
        run_benchmark([BenchItem(QS[0], "coverage", ("dog",))], SMALL, _solved_script(), grader="exact")


def test_accuracy_recomputes_from_rows():
    qs = [Question(f"q{i}", f"problem {i}", ground_truth="42") for i in range(12)]
    report = run_benchmark(qs, SMALL, mock_backend(3, success=lambda b: 0.5), workers=4)
    assert report.accuracy == sum(r.correct for r in report.per_question) / len(report.per_question)
    assert [r.id for r in report.per_question] == sorted(r.id for r in report.per_question)


def test_coverage_grader():
    item = BenchItem(Question("w", "Write about a dog in a park."), "coverage", ("dog", "park", "kite", "sun"))

    def fn(request):
        role = request.tag.rsplit("/", 1)[-1]
        return {"recruiter": roster(2), "solver-critic": AGREE, "evaluator": VERDICT_OK}.get(
            role, think("The dogs played in the park all day."))

    report = run_benchmark([item], SMALL, FunctionBackend(fn), grader="coverage")
    assert report.accuracy == 0.5
    assert report.per_question[0].score == 0.5 and not report.per_question[0].correct


def test_code_grader():
    item = BenchItem(Question("c", "Write add(a, b)."), "code", tests=("assert add(1, 2) == 3",))
    solution = think("Here:\n```python\ndef add(a, b):\n    return a + b\n```")

    def fn(request):
        role = request.tag.rsplit("/", 1)[-1]
        return {"recruiter": roster(2), "solver-critic": AGREE, "evaluator": VERDICT_OK}.get(role, solution)

    report = run_benchmark([item], SMALL, FunctionBackend(fn), grader="code", code_runner=RUNNER)
    assert report.accuracy == 1.0


def test_read_bench_items(tmp_path):
    p = tmp_path / "b.jsonl"
    p.write_text('{"id": "x", "statement": "s", "task_type": "coverage", "concepts": ["a", "b"]}\n')
    (item,) = read_bench_items(p)
    assert item.task_type == "coverage" and item.concepts == ("a", "b")
    p.write_text('{"id": "x", "statement": "s", "task_type": "essay"}\n')
    with pytest.raises(ValueError, match=":1:"):
        read_bench_items(p)


# -- sweeps ----------------------------------------------------------------------


def test_sweep_single_value_matches_plain_run():
    qs = [Question(f"q{i}", f"problem {i}", ground_truth="42") for i in range(6)]
    (row,) = sweep(qs, SweepAxis.TOTAL_AGENTS, [5], RunConfig(), mock_backend(1))
    plain = run_benchmark(qs, RunConfig(), mock_backend(1))
    assert row.accuracy == plain.accuracy
    assert row.mean_tokens == sum(r.tokens for r in plain.per_question) / 6


def test_sweep_constant_mock_is_flat():
    qs = [Question(f"q{i}", f"problem {i}", ground_truth="42") for i in range(4)]
    backend = mock_backend(0, success=lambda b: 1.0)
    rows = sweep(qs, SweepAxis.CRITIC_ITERATIONS, [1, 2, 3], SMALL, backend)
    assert [r.value for r in rows] == [1, 2, 3]
    assert {r.accuracy for r in rows} == {1.0}


def test_sweep_budget_calibrated_mock_prefers_larger_budget():
    qs = [Question(f"q{i}", f"problem {i}", ground_truth="42") for i in range(40)]

    def success(budget):
        return 0.9 if budget >= 16384 else 0.3

    rows = sweep(qs, SweepAxis.MAX_TOKENS, [8192, 16384], SMALL, mock_backend(5, success=success))
    assert rows[1].accuracy > rows[0].accuracy


def test_sweep_axis_validation():
    with pytest.raises(ValueError):
        check_axis_values(SweepAxis.TOTAL_AGENTS, [0])
    with pytest.raises(ValueError):
        check_axis_values(SweepAxis.TOTAL_AGENTS, [1])
    with pytest.raises(ValueError):
        check_axis_values(SweepAxis.MAX_TOKENS, [])
    check_axis_values(SweepAxis.TOTAL_ITERATIONS, [1, 2])


def test_sweep_failed_cell_is_zero_row():
    qs = [Question("q", "p", ground_truth="42")]

    def fn(request):
        if request.max_tokens > 4096:
            raise RuntimeError("boom")
        return StochasticSolverAgent(0, success=lambda b: 1.0)(request)

    rows = sweep(qs, SweepAxis.MAX_TOKENS, [2048, 8192], SMALL, FunctionBackend(fn))
    assert rows[0].accuracy == 1.0
    assert (rows[1].accuracy, rows[1].note[:6]) == (0.0, "failed")


def test_report_and_csv(tmp_path):
    import json

    report = run_benchmark(QS, SMALL, _solved_script("a", "b"))
    write_report(report, tmp_path / "r.json", {"extra": 1})
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["accuracy"] == 1.0 and data["extra"] == 1
    assert data["config_snapshot"]["total_agents"] == 2
    rows = sweep(QS, SweepAxis.TOTAL_ITERATIONS, [1], SMALL, _solved_script("a", "b"))
    write_sweep_csv(rows, tmp_path / "s.csv")
    with (tmp_path / "s.csv").open() as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["value", "accuracy", "mean_tokens", "mean_turns"]
    assert table[1][:2] == ["1", "1.000000"]
