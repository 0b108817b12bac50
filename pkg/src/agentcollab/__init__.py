"""Multi-agent collaborative problem solving with replayable transcripts.

Problem-solver agents draft, critique and revise a solution; an evaluator
grades it and an optional CEO agent reallocates resources between rounds.
Traces that pass the consensus, format and correctness filters become
supervised fine-tuning data.
"""

from .backend import ChatBackend, OpenAICompatibleBackend, ScriptEntry, ScriptedBackend, load_script
from .bench import BenchReport, SweepAxis, grade_concept_coverage, grade_exact, run_benchmark, sweep
from .datapipe import generate_dataset, is_valid_trace
from .domain import (
    AgentKind,
    AgentRole,
    CeoDirective,
    Decision,
    EvaluatorVerdict,
    Question,
    RunConfig,
    SolveOutcome,
    SolveStatus,
    TraceSample,
)
from .orchestrator import run_question, solve, solve_with_ceo
from .parsing import extract_boxed, parse_ceo, parse_evaluator

__version__ = "0.1.0"
