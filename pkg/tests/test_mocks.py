from agentcollab.backend import ChatRequest
from agentcollab.domain import ChatMessage, Question, RunConfig, SolveStatus
from agentcollab.mocks import StochasticSolverAgent, mock_backend, saturating_success
from agentcollab.orchestrator import run_question
from agentcollab.parsing import extract_boxed, parse_ceo, parse_roster

MSGS = (ChatMessage("system", "s"), ChatMessage("user", "u"))


def test_saturating_success_rises():
    values = [saturating_success(b) for b in (0, 2048, 8192, 16384, 32000)]
    assert values == sorted(values) and values[0] == 0.0 and values[-1] < 1.0


def test_draft_follows_success_probability():
    always = StochasticSolverAgent(0, success=lambda b: 1.0, truths={"q": "7"})
    never = StochasticSolverAgent(0, success=lambda b: 0.0, truths={"q": "7"})
    req = ChatRequest(MSGS, 2048, tag="q/solver-draft")
    assert extract_boxed(always(req)) == "7"
    assert extract_boxed(never(req)) == "-1"


def test_other_roles_are_well_formed():
    agent = StochasticSolverAgent(0)
    assert len(parse_roster(agent(ChatRequest(MSGS, 100, tag="recruiter")), 4)) == 4
    d = parse_ceo(agent(ChatRequest(MSGS, 4096, tag="ceo")))
    assert d.max_tokens == 8192 and d.recruit_number == 2
    assert agent(ChatRequest(MSGS, 100, tag="judge")).startswith("Yes")


def test_mock_runs_are_seed_deterministic():
    q = Question("q", "p", ground_truth="42")
    cfg = RunConfig(total_agents=2, critic_iterations=1, total_iterations=2, ceo_enabled=True)
    a = run_question(q, cfg, mock_backend(11, success=lambda b: 0.3))
    b = run_question(q, cfg, mock_backend(11, success=lambda b: 0.3))
    assert a.trace == b.trace
    assert a.status in (SolveStatus.SOLVED, SolveStatus.EXHAUSTED)
