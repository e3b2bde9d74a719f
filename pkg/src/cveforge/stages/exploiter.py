"""Exploit stage: craft and demonstrate the PoC, then gate it."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from cveforge.agents.prompts import (
    EXPLOIT_CRITIC_PROMPT,
    EXPLOIT_DEVELOPER_PROMPT,
    knowledge_block,
    render_transcript,
)
from cveforge.agents.runner import CycleResult, run_dev_critic_cycle
from cveforge.agents.spec import (
    OUTCOME_BUDGET,
    OUTCOME_CAP,
    OUTCOME_FORMAT,
    AgentSpec,
    AgentTranscript,
)
from cveforge.errors import StageFailure
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.sandbox.base import SandboxHandle
from cveforge.sandbox.tools import FULL_TOOLSET
from cveforge.stages.builder import CRITIC_SCHEMA, SetupReport
from cveforge.stages.knowledge import KnowledgeBase

EXPLOIT_SCHEMA = OutputSchema(
    name="exploit_report",
    fields=(
        field_spec("success", "bool"),
        field_spec("exploit_overview", "str"),
        field_spec("poc_script", "str", description="full text of the PoC script"),
        field_spec("example_input", "str", description="one concrete crashing input"),
        field_spec(
            "demonstrated_evidence",
            "str",
            description="trigger evidence citing the command log file",
        ),
    ),
    checks=(
        lambda v: (
            "poc_script must be non-empty when success is true"
            if v.get("success") and not str(v.get("poc_script", "")).strip()
            else None
        ),
    ),
)

_LOG_PATH_RE = re.compile(r"[\w./-]*\.logs/\d+_(?:out|err)\.log")


@dataclass(frozen=True)
class ExploitReport:
    success: bool
    exploit_overview: str
    poc_script: str
    example_input: str
    demonstrated_evidence: str

    def poc_digest(self) -> str:
        return hashlib.sha256(self.poc_script.encode("utf-8")).hexdigest()

    def render(self) -> str:
        return (
            f"Exploit report (success={str(self.success).lower()}):\n"
            f"Overview: {self.exploit_overview}\n"
            f"Example input: {self.example_input}\n"
            f"Evidence: {self.demonstrated_evidence}\n"
            f"PoC script:\n{self.poc_script}"
        )


def _evidence_cites_existing_log(evidence: str, sandbox: SandboxHandle) -> bool:
    """Free-text claims are insufficient: the cited log file must exist."""
    for candidate in _LOG_PATH_RE.findall(evidence):
        try:
            if sandbox.resolve_path(candidate).is_file():
                return True
        except Exception:
            continue
    return False


def develop_exploit(
    kb: KnowledgeBase,
    setup: SetupReport,
    sandbox: SandboxHandle,
    gateway: Gateway,
    *,
    exploit_filename: str = "exploit.py",
    max_feedback: int = 1,
    max_tool_calls: int = 60,
    critic_context_tokens: int = 12000,
    guard=None,
    on_transcript=None,
) -> tuple[ExploitReport | None, CycleResult]:
    """Exploit developer plus exploit critic, one feedback iteration.

    A mechanical audit (does the cited log exist? does the reported script
    match the file at the fixed path?) is surfaced to the critic alongside
    the transcript; the verdict stays the critic's.
    """
    dev = AgentSpec(
        role_name="exploit_developer",
        system_prompt=EXPLOIT_DEVELOPER_PROMPT.replace("exploit.py", exploit_filename),
        toolset=FULL_TOOLSET,
        final_answer_schema=EXPLOIT_SCHEMA,
        max_tool_calls=max_tool_calls,
        decision_field="success",
    )
    critic = AgentSpec(
        role_name="exploit_critic",
        system_prompt=EXPLOIT_CRITIC_PROMPT,
        toolset=(),
        final_answer_schema=CRITIC_SCHEMA,
        is_critic=True,
    )

    def critic_context(dev_transcript: AgentTranscript, answer: dict | None):
        blocks = [
            knowledge_block(kb.to_json()),
            setup.render(),
            render_transcript(dev_transcript, token_budget=critic_context_tokens),
        ]
        if answer is not None:
            audit = _mechanical_audit(answer, sandbox, exploit_filename)
            blocks.append(f"Developer's final report:\n{answer}")
            blocks.append(audit)
        return blocks

    cycle = run_dev_critic_cycle(
        dev,
        critic,
        [knowledge_block(kb.to_json()), setup.render()],
        sandbox,
        gateway,
        max_feedback,
        critic_context=critic_context,
        guard=guard,
        on_transcript=on_transcript,
    )
    if cycle.failure_reason in (OUTCOME_CAP, OUTCOME_BUDGET, OUTCOME_FORMAT):
        raise StageFailure("exploiter", cycle.failure_reason, "exploit run did not complete")

    report = None
    if cycle.answer is not None:
        report = ExploitReport(
            success=bool(cycle.answer["success"]),
            exploit_overview=str(cycle.answer.get("exploit_overview", "")),
            poc_script=str(cycle.answer.get("poc_script", "")),
            example_input=str(cycle.answer.get("example_input", "")),
            demonstrated_evidence=str(cycle.answer.get("demonstrated_evidence", "")),
        )

    if report is not None and report.success and cycle.accepted:
        _verify_script_integrity(report, sandbox, exploit_filename)
    return report, cycle


def _mechanical_audit(answer: dict, sandbox: SandboxHandle, exploit_filename: str) -> str:
    evidence_ok = _evidence_cites_existing_log(
        str(answer.get("demonstrated_evidence", "")), sandbox
    )
    script_path = sandbox.workdir / exploit_filename
    if script_path.is_file():
        on_disk = hashlib.sha256(script_path.read_bytes()).hexdigest()
        reported = hashlib.sha256(
            str(answer.get("poc_script", "")).encode("utf-8")
        ).hexdigest()
        digest_note = "matches" if on_disk == reported else "DOES NOT match"
        file_note = f"{exploit_filename} exists; reported script {digest_note} the file"
    else:
        file_note = f"{exploit_filename} does not exist in the sandbox"
    return (
        "Mechanical audit:\n"
        f"- evidence cites an existing command log: {'yes' if evidence_ok else 'NO'}\n"
        f"- {file_note}"
    )


def _verify_script_integrity(
    report: ExploitReport, sandbox: SandboxHandle, exploit_filename: str
) -> None:
    """An accepted success must leave the reported script at the fixed path."""
    script_path = sandbox.workdir / exploit_filename
    if not script_path.is_file():
        raise StageFailure(
            "exploiter", "exploit_integrity", f"{exploit_filename} missing after success"
        )
    on_disk = hashlib.sha256(script_path.read_bytes()).hexdigest()
    if on_disk != report.poc_digest():
        raise StageFailure(
            "exploiter",
            "exploit_integrity",
            "reported PoC text does not match the script on disk",
        )
