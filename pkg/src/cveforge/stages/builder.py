"""Environment build stage: read-only planning, tool-driven setup, and
the setup gate with one feedback iteration."""

from __future__ import annotations

from dataclasses import dataclass, field

from cveforge.agents.prompts import (
    PREREQ_DEVELOPER_PROMPT,
    SETUP_CRITIC_PROMPT,
    SETUP_DEVELOPER_PROMPT,
    knowledge_block,
    render_transcript,
)
from cveforge.agents.runner import CycleResult, run_agent, run_dev_critic_cycle
from cveforge.agents.spec import (
    OUTCOME_BUDGET,
    OUTCOME_CAP,
    OUTCOME_FINAL,
    OUTCOME_FORMAT,
    AgentSpec,
    AgentTranscript,
    CritiqueVerdict,
)
from cveforge.errors import StageFailure
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.sandbox.base import SandboxHandle
from cveforge.sandbox.tools import FULL_TOOLSET, READ_ONLY_TOOLSET
from cveforge.stages.knowledge import KnowledgeBase

PREREQ_SCHEMA = OutputSchema(
    name="setup_plan",
    fields=(
        field_spec("overview", "str", description="what the project is and does"),
        field_spec("important_files", "list", description="paths with notes"),
        field_spec("required_services", "str", description="services + configs, or 'none'"),
        field_spec("expected_state", "str", description="checkable fully-set-up state"),
    ),
    checks=(
        lambda v: (
            None
            if all(str(v.get(name, "")).strip() for name in
                   ("overview", "required_services", "expected_state"))
            else "overview, required_services and expected_state must be non-empty"
        ),
    ),
)

SETUP_SCHEMA = OutputSchema(
    name="setup_report",
    fields=(
        field_spec("success", "bool"),
        field_spec("access_instructions", "str", description="how to reach the project"),
        field_spec("setup_summary", "str", description="what was done"),
    ),
    checks=(
        lambda v: (
            "access_instructions must be non-empty when success is true"
            if v.get("success") and not str(v.get("access_instructions", "")).strip()
            else None
        ),
    ),
)

CRITIC_SCHEMA = OutputSchema(
    name="critique",
    fields=(
        field_spec("analysis", "str"),
        field_spec("accepted", "bool"),
        field_spec("feedback", "str", required=False),
    ),
    checks=(
        lambda v: (
            "feedback must be non-empty when accepted is false"
            if not v.get("accepted") and not str(v.get("feedback", "")).strip()
            else None
        ),
    ),
)


@dataclass(frozen=True)
class ImportantFile:
    path: str
    note: str = ""
    exists: bool = True


@dataclass(frozen=True)
class PreReqPlan:
    overview: str
    important_files: tuple[ImportantFile, ...]
    required_services: str
    expected_state: str

    def render(self) -> str:
        lines = [
            "Setup plan:",
            f"Overview: {self.overview}",
            "Important files:",
        ]
        for item in self.important_files:
            marker = "" if item.exists else " [warning: path not found in source tree]"
            note = f" - {item.note}" if item.note else ""
            lines.append(f"  {item.path}{note}{marker}")
        if not self.important_files:
            lines.append("  (none)")
        lines.append(f"Required services: {self.required_services}")
        lines.append(f"Expected state: {self.expected_state}")
        return "\n".join(lines)


@dataclass(frozen=True)
class SetupReport:
    success: bool
    access_instructions: str
    setup_summary: str

    def render(self) -> str:
        return (
            f"Setup report (success={str(self.success).lower()}):\n"
            f"Access: {self.access_instructions}\n"
            f"Summary: {self.setup_summary}"
        )


@dataclass
class BuilderResult:
    plan: PreReqPlan
    report: SetupReport | None
    accepted: bool
    verdict: CritiqueVerdict | None
    transcripts: list[AgentTranscript] = field(default_factory=list)


def _prereq_spec(system_prompt_suffix: str, max_tool_calls: int) -> AgentSpec:
    return AgentSpec(
        role_name="prereq_developer",
        system_prompt=PREREQ_DEVELOPER_PROMPT + system_prompt_suffix,
        toolset=READ_ONLY_TOOLSET,
        final_answer_schema=PREREQ_SCHEMA,
        max_tool_calls=max_tool_calls,
        read_only=True,
    )


def plan_prerequisites(
    kb: KnowledgeBase,
    sandbox: SandboxHandle,
    gateway: Gateway,
    *,
    max_tool_calls: int = 60,
    guard=None,
    on_transcript=None,
) -> tuple[PreReqPlan, AgentTranscript]:
    """Read-only exploration producing the setup plan.

    Plan paths are validated against the mounted tree; entries pointing at
    nothing are kept but flagged so the setup agent sees the warning.
    """
    spec = _prereq_spec("", max_tool_calls)
    transcript, answer = run_agent(
        spec,
        [knowledge_block(kb.to_json())],
        sandbox,
        gateway,
        guard=guard,
        on_transcript=on_transcript,
    )
    if transcript.outcome != OUTCOME_FINAL or answer is None:
        raise StageFailure("builder", transcript.outcome, "planning did not complete")

    important: list[ImportantFile] = []
    for entry in answer["important_files"]:
        if isinstance(entry, dict):
            path = str(entry.get("path", "")).strip()
            note = str(entry.get("note", "")).strip()
        else:
            path, note = str(entry).strip(), ""
        if not path:
            continue
        important.append(
            ImportantFile(path=path, note=note, exists=(sandbox.workdir / path).exists())
        )
    plan = PreReqPlan(
        overview=answer["overview"],
        important_files=tuple(important),
        required_services=answer["required_services"],
        expected_state=answer["expected_state"],
    )
    return plan, transcript


def run_setup(
    kb: KnowledgeBase,
    plan: PreReqPlan,
    sandbox: SandboxHandle,
    gateway: Gateway,
    *,
    max_feedback: int = 1,
    max_tool_calls: int = 60,
    critic_context_tokens: int = 12000,
    guard=None,
    on_transcript=None,
) -> tuple[SetupReport | None, CycleResult]:
    """Setup developer plus setup critic, one feedback iteration.

    The critic reviews only logs: the rendered developer transcript plus
    the knowledge base and plan. A rejection after the feedback budget is
    returned (not raised) so the pipeline can record the gate decision.
    """
    dev = AgentSpec(
        role_name="setup_developer",
        system_prompt=SETUP_DEVELOPER_PROMPT,
        toolset=FULL_TOOLSET,
        final_answer_schema=SETUP_SCHEMA,
        max_tool_calls=max_tool_calls,
        decision_field="success",
    )
    critic = AgentSpec(
        role_name="setup_critic",
        system_prompt=SETUP_CRITIC_PROMPT,
        toolset=(),
        final_answer_schema=CRITIC_SCHEMA,
        is_critic=True,
    )

    def critic_context(dev_transcript: AgentTranscript, answer: dict | None):
        blocks = [
            knowledge_block(kb.to_json()),
            plan.render(),
            render_transcript(dev_transcript, token_budget=critic_context_tokens),
        ]
        if answer is not None:
            blocks.append(f"Developer's final report:\n{answer}")
        return blocks

    cycle = run_dev_critic_cycle(
        dev,
        critic,
        [knowledge_block(kb.to_json()), plan.render()],
        sandbox,
        gateway,
        max_feedback,
        critic_context=critic_context,
        guard=guard,
        on_transcript=on_transcript,
    )
    if cycle.failure_reason in (OUTCOME_CAP, OUTCOME_BUDGET, OUTCOME_FORMAT):
        raise StageFailure("builder", cycle.failure_reason, "setup did not complete")

    report = None
    if cycle.answer is not None:
        report = SetupReport(
            success=bool(cycle.answer["success"]),
            access_instructions=str(cycle.answer.get("access_instructions", "")),
            setup_summary=str(cycle.answer.get("setup_summary", "")),
        )
    return report, cycle
