import json
from pathlib import Path

import pytest

from agentcollab.backend import load_script
from agentcollab.datapipe import question_from_record
from agentcollab.domain import RunConfig

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_SCRIPT = FIXTURES / "golden.jsonl"
GOLDEN_QUESTION = FIXTURES / "golden_question.json"
CEO_CONTINUE = FIXTURES / "ceo_continue.txt"

# the appendix sample: two solvers, one critic pass, one round
GOLDEN_CONFIG = RunConfig(total_agents=2, critic_iterations=1, total_iterations=1)


@pytest.fixture
def golden_question():
    return question_from_record(json.loads(GOLDEN_QUESTION.read_text()))


@pytest.fixture
def golden_backend():
    return load_script(GOLDEN_SCRIPT)


@pytest.fixture
def golden_config():
    return GOLDEN_CONFIG


@pytest.fixture
def ceo_text():
    return CEO_CONTINUE.read_text()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
