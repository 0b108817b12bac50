"""Role prompt templates and their rendering.

The built-in set is the math-task prompt set: one system/user pair for each of
the CEO, the expert recruiter, the drafting solver, the critic solvers and the
evaluator. Placeholders are written ``${name}`` and substituted literally in a
single pass, so a bound value that itself contains ``${`` is left alone.

Alternate task families (writing, coding) can swap in their own bodies with
:func:`load_template_file` / :func:`load_template_dir`, as long as they only
use variables from the role's contract.

Note the recruiter's ``cnt_critic_agents`` variable holds the number of
experts to recruit, i.e. the full solver count, not just the critics.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .domain import ChatMessage, MessageRole

PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class MissingVariable(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing template variable {self.name!r}"


class UnknownTemplate(KeyError):
    pass


class TemplateId(str, enum.Enum):
    CEO_SYSTEM = "CeoSystem"
    CEO_USER = "CeoUser"
    RECRUITER_SYSTEM = "RecruiterSystem"
    RECRUITER_USER = "RecruiterUser"
    SOLVER_DRAFT_SYSTEM = "SolverDraftSystem"
    SOLVER_DRAFT_USER = "SolverDraftUser"
    SOLVER_CRITIC_SYSTEM = "SolverCriticSystem"
    SOLVER_CRITIC_USER = "SolverCriticUser"
    EVALUATOR_SYSTEM = "EvaluatorSystem"
    EVALUATOR_USER = "EvaluatorUser"


# (system, user) pair for each role
_PAIRS = {
    "Ceo": (TemplateId.CEO_SYSTEM, TemplateId.CEO_USER),
    "Recruiter": (TemplateId.RECRUITER_SYSTEM, TemplateId.RECRUITER_USER),
    "SolverDraft": (TemplateId.SOLVER_DRAFT_SYSTEM, TemplateId.SOLVER_DRAFT_USER),
    "SolverCritic": (TemplateId.SOLVER_CRITIC_SYSTEM, TemplateId.SOLVER_CRITIC_USER),
    "Evaluator": (TemplateId.EVALUATOR_SYSTEM, TemplateId.EVALUATOR_USER),
}


def pair_of(tid: TemplateId) -> tuple[TemplateId, TemplateId]:
    for pair in _PAIRS.values():
        if tid in pair:
            return pair
    raise UnknownTemplate(tid)


@dataclass(frozen=True)
class Template:
    id: TemplateId
    body: str

    @property
    def required_vars(self) -> frozenset[str]:
        return frozenset(PLACEHOLDER_RE.findall(self.body))

    def substitute(self, bindings: Mapping[str, str]) -> str:
        def repl(m):
            name = m.group(1)
            if name not in bindings:
                raise MissingVariable(name)
            return str(bindings[name])

        return PLACEHOLDER_RE.sub(repl, self.body)


_CEO_SYSTEM = r"""You are the CEO of a collaborative problem-solving system. Your responsibilities include:
1. Monitoring solution progress and resource allocation
2. Making strategic decisions about continuation/termination
3. Managing expert recruitment and retention
4. Directing discussion focus areas when the solution is not correct
5. Adjusting reasoning depth through token budgets

Previous system state:
- Task: ${task_description}
- Latest solution: ${current_solution}
- Evaluation feedback: ${evaluation_feedback}
- Current resources: ${current_resources}"""

_CEO_USER = r"""Now, you need to decide the system state for this round. Carefully consider the following:
- Choose <Stop> only if solution is correct
- Recruit experts based on skill gaps identified in evaluation and do not recruit more than 4 experts, typically only 2-3 agents are needed for ordinary tasks and 4 agents are needed for complex tasks
- Direct discussion to address weakest solution aspects
- Set token budget proportional to the task complexity, token usages should choose from [0, 2048, 4096, 8192, 16384, 32000], typically 2048 tokens for simple tasks, 8192 tokens for tasks require medium reasoning, and 16384 or more tokens for complex reasoning tasks

Your response must strictly follow this structure:
### Decision: <Continue> or <Stop>
### Recruit Number: Number of experts to recruit in this round, should be an integer between 1 and 4
### Direction: Discussion direction based on the task description, latest solution, critic opinions, and evaluation feedback
### Maximum Tokens: Maximum tokens for each agent in this round, should be an integer between 2048 and 32000"""

_RECRUITER_SYSTEM = r"""# Role Description
You are the leader of a group of experts, now you are facing a math problem:
${task_description}

# Primary Objective
Your sole responsibility is to recruit ${cnt_critic_agents} experts in different specialized fields to solve the math problem.
- DO NOT attempt to solve the problem yourself
- DO NOT propose any solutions or calculations

# Recruitment Focus
Your selection should be based on:
1. Identifying which expertise domains are relevant to this math problem type
2. Considering complementary skill sets that could collaborate effectively
3. Ensuring coverage of all potential aspects needed for solution

Here are some suggestions:
${advice}

# Prohibited Actions
- Any mathematical reasoning or problem-solving attempts
- Speculation about potential solutions"""

_RECRUITER_USER = r"""You can recruit ${cnt_critic_agents} expert in different fields. What experts will you recruit to better generate an accurate solution?

# Strict Instructions
You must ONLY recruit ${cnt_critic_agents} experts in distinct fields relevant to the math problem type.
- DO NOT suggest solution approaches
- DO NOT compare potential methodologies

# Response Requirements
1. List ${cnt_critic_agents} expert roles with their specialization
2. Each entry must specify:
   - Professional discipline (e.g., computer scientist, mathematician)
   - Primary specialization field
   - Specific technical expertise within that field
3. Ensure complementary but non-overlapping domains

# Response Format Guidance
Your response must follow this exact structure:
1. A [discipline] specialized in [primary field], with expertise in [specific technical area]
2. A [different discipline] with expertise in [related field], particularly in [technical specialization]

Only provide the numbered list of expert descriptions and nothing more. Begin now:"""

_SOLVER_DRAFT_SYSTEM = r"""Solve the following math problem accurately:
${task_description}

You have all the necessary information to solve this math problem. Do not request additional details."""

_SOLVER_DRAFT_USER = r"""You are ${role_description}. Based on the chat history and your knowledge, provide a precise and well-explained solution to the math problem.
Here is some thinking direction: ${advice}

# Response Format Guidance:
- Your final answer must directly address the math problem.
- Format your final answer as \boxed{answer} at the end of your response for easy evaluation."""

_SOLVER_CRITIC_SYSTEM = r"""You are ${role_description}. You are in a discussion group, aiming to collaborative solve the following math problem:
${task_description}

Based on your knowledge, give your critics to a solution of the math problem."""

_SOLVER_CRITIC_USER = r"""Now compare your solution with the last solution given in the chat history and give your critics. The final answer is highlighted in the form \boxed{answer}.
Here is some thinking direction: ${advice}
When responding, you should follow the following rules:
1. This math problem can be answered without any extra information. You should not ask for any extra information.
2. Compare your solution with the given last solution, give your critics. You should only give your critics, don't give your answer.
3. If the final answer of your solution is the same as the final answer in the provided last solution, end your response with a special token "[Agree]", otherwise end your response with a special token "[Disagree]"."""

_EVALUATOR_SYSTEM = r"""Experts: ${all_role_description}
Problem: ${task_description}
Solution:
${solution}"""

_EVALUATOR_USER = r"""You are an experienced math teacher. As a good teacher, you carefully check the correctness of the given last solution on a complex math problem. When the last solution is wrong, you should output a correctness of 0 and give your advice to the students on how to correct the solution. When it is correct, output a correctness of 1 and why it is correct. Also check that the final answer is in the form \boxed{answer} at the end of the solution. You should also give your confidence score for the correctness of the solution.

You should respond in the following format:
### Correctness: (0 or 1, 0 is wrong, and 1 is correct)
### Confidence: (confidence score for the correctness of the solution)
### Advice: (advice to correct the answer or why it is correct)"""

DEFAULT_TEMPLATES: dict[TemplateId, Template] = {
    TemplateId.CEO_SYSTEM: Template(TemplateId.CEO_SYSTEM, _CEO_SYSTEM),
    TemplateId.CEO_USER: Template(TemplateId.CEO_USER, _CEO_USER),
    TemplateId.RECRUITER_SYSTEM: Template(TemplateId.RECRUITER_SYSTEM, _RECRUITER_SYSTEM),
    TemplateId.RECRUITER_USER: Template(TemplateId.RECRUITER_USER, _RECRUITER_USER),
    TemplateId.SOLVER_DRAFT_SYSTEM: Template(TemplateId.SOLVER_DRAFT_SYSTEM, _SOLVER_DRAFT_SYSTEM),
    TemplateId.SOLVER_DRAFT_USER: Template(TemplateId.SOLVER_DRAFT_USER, _SOLVER_DRAFT_USER),
    TemplateId.SOLVER_CRITIC_SYSTEM: Template(TemplateId.SOLVER_CRITIC_SYSTEM, _SOLVER_CRITIC_SYSTEM),
    TemplateId.SOLVER_CRITIC_USER: Template(TemplateId.SOLVER_CRITIC_USER, _SOLVER_CRITIC_USER),
    TemplateId.EVALUATOR_SYSTEM: Template(TemplateId.EVALUATOR_SYSTEM, _EVALUATOR_SYSTEM),
    TemplateId.EVALUATOR_USER: Template(TemplateId.EVALUATOR_USER, _EVALUATOR_USER),
}


def _resolve(tid) -> TemplateId:
    try:
        return TemplateId(tid)
    except ValueError:
        raise UnknownTemplate(tid) from None


def role_vars(tid, templates: Optional[Mapping[TemplateId, Template]] = None) -> frozenset[str]:
    """Variables needed to render the whole system/user pair that ``tid`` belongs to."""
    templates = templates or DEFAULT_TEMPLATES
    system_id, user_id = pair_of(_resolve(tid))
    return templates[system_id].required_vars | templates[user_id].required_vars


def render(
    tid,
    bindings: Mapping[str, str],
    templates: Optional[Mapping[TemplateId, Template]] = None,
) -> list[ChatMessage]:
    """Render the role pair containing ``tid`` into ``[system, user]`` messages."""
    templates = templates or DEFAULT_TEMPLATES
    system_id, user_id = pair_of(_resolve(tid))
    missing = sorted(role_vars(tid, templates) - set(bindings))
    if missing:
        raise MissingVariable(missing[0])
    return [
        ChatMessage(MessageRole.SYSTEM, templates[system_id].substitute(bindings)),
        ChatMessage(MessageRole.USER, templates[user_id].substitute(bindings)),
    ]


def catalog(templates: Optional[Mapping[TemplateId, Template]] = None) -> list[tuple[TemplateId, frozenset[str]]]:
    templates = templates or DEFAULT_TEMPLATES
    return [(tid, templates[tid].required_vars) for tid in TemplateId]


def parse_template_text(text: str, source: str = "<string>") -> Template:
    header, _, body = text.partition("\n")
    try:
        tid = TemplateId(header.strip())
    except ValueError:
        raise UnknownTemplate(f"{source}: header {header.strip()!r} is not a template id") from None
    if body.endswith("\n"):
        body = body[:-1]
    template = Template(tid, body)
    allowed = role_vars(tid)
    extra = template.required_vars - allowed
    if extra:
        raise ValueError(f"{source}: {tid.value} uses variables outside its contract: {sorted(extra)}")
    return template


def load_template_file(path) -> Template:
    """Read an override file: first line is the template id, the rest is the body verbatim."""
    path = Path(path)
    return parse_template_text(path.read_text(encoding="utf-8"), str(path))


def load_template_dir(path) -> dict[TemplateId, Template]:
    """Overlay every ``*.txt`` override in ``path`` on top of the defaults."""
    templates = dict(DEFAULT_TEMPLATES)
    for file in sorted(Path(path).glob("*.txt")):
        t = load_template_file(file)
        templates[t.id] = t
    return templates
