"""CTF verifier stage: a read-only developer writes the flag-releasing
script, a deterministic checker executes it, a critic audits the logic.

Both check loops are bounded at five attempts each: failed flag checks
feed back to the developer, and so do critic rejections (with a fresh
functional check for every revision). All loop events carry one
monotonically increasing index.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path

from cveforge.agents.prompts import (
    VERIFIER_CRITIC_PROMPT,
    VERIFIER_DEVELOPER_PROMPT,
    knowledge_block,
    render_transcript,
)
from cveforge.agents.runner import run_agent
from cveforge.agents.spec import (
    OUTCOME_FINAL,
    AgentSpec,
    AgentTranscript,
    CritiqueVerdict,
)
from cveforge.errors import CommandTimeout, StageFailure, StorageFailed
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.ledger import UsageLedger
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.sandbox.base import SandboxHandle
from cveforge.sandbox.tools import READ_ONLY_TOOLSET
from cveforge.stages.builder import CRITIC_SCHEMA
from cveforge.stages.exploiter import ExploitReport
from cveforge.stages.knowledge import KnowledgeBase

PRE_SETUP_MARKER = "[verifier:pre-setup]"
EXPLOIT_EXECUTION_MARKER = "[verifier:exploit-execution]"
POST_SETUP_MARKER = "[verifier:post-setup]"

SECTION_MARKERS = {
    "pre_setup": PRE_SETUP_MARKER,
    "exploit_execution": EXPLOIT_EXECUTION_MARKER,
    "post_setup": POST_SETUP_MARKER,
}

VERIFIER_FILENAME = "verifier.py"
FLAG_TOKEN_LENGTH = 16
_ALPHANUMERICS = string.ascii_letters + string.digits

VERIFIER_SCHEMA = OutputSchema(
    name="verifier_script",
    fields=(
        field_spec("script_text", "str", description="the complete verifier script"),
    ),
)


def generate_flag_token(length: int = FLAG_TOKEN_LENGTH) -> str:
    """Fresh unpredictable flag per attempt; spoof-resistant by design."""
    return "".join(secrets.choice(_ALPHANUMERICS) for _ in range(length))


@dataclass(frozen=True)
class VerifierScript:
    script_text: str
    flag_token: str
    sections: dict[str, bool]

    @classmethod
    def build(cls, script_text: str, flag_token: str) -> "VerifierScript":
        sections = {
            name: marker in script_text for name, marker in SECTION_MARKERS.items()
        }
        return cls(script_text=script_text, flag_token=flag_token, sections=sections)

    def validate(self, exploit_filename: str) -> list[str]:
        """Structural problems that reject the script before execution."""
        problems = []
        for name, marker in SECTION_MARKERS.items():
            if not self.sections.get(name):
                problems.append(f"missing {name} section (marker {marker})")
        indexes = [
            self.script_text.find(marker) for marker in SECTION_MARKERS.values()
        ]
        if all(i >= 0 for i in indexes) and indexes != sorted(indexes):
            problems.append("sections are out of order")
        if self.flag_token not in self.script_text:
            problems.append("the flag string is not embedded in the script")
        if exploit_filename not in self.script_text:
            problems.append(
                f"the script never references the exploit at {exploit_filename}"
            )
        return problems


@dataclass(frozen=True)
class FlagCheckOutcome:
    """Result of one functional check of the verifier."""

    attempt_index: int
    ran_ok: bool
    flag_found: bool
    exploit_digest_before: str
    exploit_digest_after: str
    output_excerpt: str
    failure_reason: str | None = None

    @property
    def success(self) -> bool:
        return (
            self.ran_ok
            and self.flag_found
            and self.exploit_digest_before == self.exploit_digest_after
        )

    def to_record(self) -> dict:
        record = asdict(self)
        record["success"] = self.success
        return record


def develop_verifier(
    kb: KnowledgeBase,
    exploit: ExploitReport,
    flag_token: str,
    sandbox: SandboxHandle,
    gateway: Gateway,
    *,
    exploit_filename: str = "exploit.py",
    max_tool_calls: int = 60,
    feedback: str | None = None,
    guard=None,
    on_transcript=None,
) -> tuple[VerifierScript, AgentTranscript]:
    """Read-only developer produces the three-section script; every
    validation happens later in the checker and critic."""
    spec = AgentSpec(
        role_name="verifier_developer",
        system_prompt=VERIFIER_DEVELOPER_PROMPT,
        toolset=READ_ONLY_TOOLSET,
        final_answer_schema=VERIFIER_SCHEMA,
        max_tool_calls=max_tool_calls,
        read_only=True,
    )
    context = [
        knowledge_block(kb.to_json()),
        exploit.render(),
        (
            f"The exploit script is at {exploit_filename} in the project root.\n"
            f"Use exactly this flag string: {flag_token}\n"
            "Print it to standard output only when the exploit genuinely "
            "triggers the vulnerability."
        ),
    ]
    transcript, answer = run_agent(
        spec,
        context,
        sandbox,
        gateway,
        guard=guard,
        feedback=feedback,
        on_transcript=on_transcript,
    )
    if transcript.outcome != OUTCOME_FINAL or answer is None:
        raise StageFailure("verifier", transcript.outcome, "script generation failed")
    return VerifierScript.build(str(answer["script_text"]), flag_token), transcript


def _exploit_digest(sandbox: SandboxHandle, exploit_filename: str) -> str:
    path = sandbox.workdir / exploit_filename
    if not path.is_file():
        return ""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def check_flag(
    verifier: VerifierScript,
    sandbox: SandboxHandle,
    *,
    attempt_index: int,
    exploit_filename: str = "exploit.py",
    interpreter: str = "python3",
) -> FlagCheckOutcome:
    """Execute the verifier; success means a clean run, the exact flag on
    standard output (stdout only), and an untouched exploit script."""
    digest_before = _exploit_digest(sandbox, exploit_filename)
    (sandbox.workdir / VERIFIER_FILENAME).write_text(
        verifier.script_text, encoding="utf-8"
    )

    failure = None
    ran_ok = False
    stdout_text = ""
    excerpt = ""
    try:
        result = sandbox.backend.execute(
            sandbox, f"{interpreter} {VERIFIER_FILENAME}", background=False
        )
        log = sandbox.command_logs[-1]
        stdout_text = log.stdout_path.read_text(encoding="utf-8", errors="replace")
        stderr_text = log.stderr_path.read_text(encoding="utf-8", errors="replace")
        excerpt = (stdout_text + stderr_text)[-2000:]
        ran_ok = log.exit_code == 0
        if not ran_ok:
            failure = (
                f"verifier exited with {log.exit_code}; "
                f"stderr tail: {stderr_text[-500:].strip() or '(empty)'}"
            )
        del result
    except CommandTimeout as exc:
        failure = f"verifier timed out: {exc}"

    flag_found = verifier.flag_token in stdout_text
    digest_after = _exploit_digest(sandbox, exploit_filename)

    if failure is None and not flag_found:
        failure = "the flag string never appeared on standard output"
    if failure is None and digest_before != digest_after:
        failure = "the exploit script was modified during verification"
    outcome = FlagCheckOutcome(
        attempt_index=attempt_index,
        ran_ok=ran_ok,
        flag_found=flag_found,
        exploit_digest_before=digest_before,
        exploit_digest_after=digest_after,
        output_excerpt=excerpt,
        failure_reason=None if failure is None else failure,
    )
    return outcome


def critique_verifier(
    verifier_transcript: AgentTranscript,
    verifier: VerifierScript,
    exploit: ExploitReport,
    kb: KnowledgeBase,
    gateway: Gateway,
    *,
    critic_context_tokens: int = 12000,
    guard=None,
    on_transcript=None,
) -> tuple[CritiqueVerdict, AgentTranscript]:
    """Tool-less audit of the verification logic after the flag check."""
    spec = AgentSpec(
        role_name="verifier_critic",
        system_prompt=VERIFIER_CRITIC_PROMPT,
        toolset=(),
        final_answer_schema=CRITIC_SCHEMA,
        is_critic=True,
    )
    context = [
        knowledge_block(kb.to_json()),
        exploit.render(),
        f"Verifier script under review:\n{verifier.script_text}",
        render_transcript(verifier_transcript, token_budget=critic_context_tokens),
    ]
    transcript, answer = run_agent(
        spec, context, None, gateway, guard=guard, on_transcript=on_transcript
    )
    if transcript.outcome != OUTCOME_FINAL or answer is None:
        raise StageFailure("verifier", transcript.outcome, "critique failed")
    return CritiqueVerdict.from_answer(answer), transcript


@dataclass
class VerifierStageResult:
    verifier: VerifierScript | None
    accepted: bool
    outcomes: list[FlagCheckOutcome] = field(default_factory=list)
    verdicts: list[CritiqueVerdict] = field(default_factory=list)
    transcripts: list[AgentTranscript] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    failure_reason: str | None = None


def run_verifier_stage(
    kb: KnowledgeBase,
    exploit: ExploitReport,
    flag_token: str,
    sandbox: SandboxHandle,
    gateway: Gateway,
    *,
    exploit_filename: str = "exploit.py",
    interpreter: str = "python3",
    max_flag_checks: int = 5,
    max_critic_rejections: int = 5,
    max_tool_calls: int = 60,
    critic_context_tokens: int = 12000,
    guard=None,
    on_transcript=None,
) -> VerifierStageResult:
    """Drive developer -> flag check -> critic until acceptance or a loop
    budget runs out. Schema-invalid scripts are rejected before execution
    and consume a flag-check attempt."""
    result = VerifierStageResult(verifier=None, accepted=False)
    flag_attempts = 0
    critic_rejections = 0
    event_index = 0
    feedback: str | None = None

    while True:
        verifier, dev_transcript = develop_verifier(
            kb,
            exploit,
            flag_token,
            sandbox,
            gateway,
            exploit_filename=exploit_filename,
            max_tool_calls=max_tool_calls,
            feedback=feedback,
            guard=guard,
            on_transcript=on_transcript,
        )
        result.verifier = verifier
        result.transcripts.append(dev_transcript)

        problems = verifier.validate(exploit_filename)
        flag_attempts += 1
        event_index += 1
        if problems:
            outcome = FlagCheckOutcome(
                attempt_index=flag_attempts,
                ran_ok=False,
                flag_found=False,
                exploit_digest_before=_exploit_digest(sandbox, exploit_filename),
                exploit_digest_after=_exploit_digest(sandbox, exploit_filename),
                output_excerpt="",
                failure_reason="script rejected before execution: " + "; ".join(problems),
            )
        else:
            if guard is not None:
                guard.check()
            outcome = check_flag(
                verifier,
                sandbox,
                attempt_index=flag_attempts,
                exploit_filename=exploit_filename,
                interpreter=interpreter,
            )
        result.outcomes.append(outcome)
        result.events.append(
            {"index": event_index, "kind": "flag_check", **outcome.to_record()}
        )

        if not outcome.success:
            if flag_attempts >= max_flag_checks:
                result.failure_reason = "flag_check_exhausted"
                return result
            feedback = f"functional check failed: {outcome.failure_reason}"
            continue

        verdict, critic_transcript = critique_verifier(
            dev_transcript,
            verifier,
            exploit,
            kb,
            gateway,
            critic_context_tokens=critic_context_tokens,
            guard=guard,
            on_transcript=on_transcript,
        )
        result.transcripts.append(critic_transcript)
        result.verdicts.append(verdict)
        event_index += 1
        result.events.append(
            {
                "index": event_index,
                "kind": "critique",
                "accepted": verdict.accepted,
                "feedback": verdict.feedback,
            }
        )

        if verdict.accepted:
            result.accepted = True
            return result
        critic_rejections += 1
        if critic_rejections >= max_critic_rejections:
            result.failure_reason = "critic_rejected"
            return result
        feedback = verdict.feedback


def store_reproduced(
    cve_id: str,
    sandbox: SandboxHandle,
    exploit: ExploitReport,
    verifier: VerifierScript,
    kb: KnowledgeBase,
    ledger: UsageLedger,
    run_dir: str | Path,
    *,
    exploit_filename: str = "exploit.py",
    run_index: int = 1,
    wall_time_s: float = 0.0,
):
    """Persist the reproduction: snapshot reference, scripts, KB, metadata.

    Transcripts are already on disk under ``run_dir/transcripts`` (the
    pipeline persists every agent run as it completes); the metadata
    indexes them. Returns a ReproductionArtifact.
    """
    from cveforge.pipeline.state import ReproductionArtifact

    run_dir = Path(run_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        snapshot_ref = sandbox.backend.snapshot(sandbox)
        (run_dir / "snapshot.ref").write_text(
            json.dumps(
                {
                    "ref": snapshot_ref,
                    "backend": type(sandbox.backend).__name__,
                    "sandbox_id": sandbox.sandbox_id,
                },
                indent=2,
            ),
            encoding="utf-8",
        )
        exploit_path = run_dir / "exploit"
        exploit_path.write_bytes((sandbox.workdir / exploit_filename).read_bytes())
        verifier_path = run_dir / "verifier"
        verifier_path.write_text(verifier.script_text, encoding="utf-8")
        kb_path = kb.save(run_dir / "kb.json")

        transcripts_dir = run_dir / "transcripts"
        transcripts_dir.mkdir(exist_ok=True)
        transcript_index = sorted(p.name for p in transcripts_dir.glob("*.jsonl"))
        metadata = {
            "cve_id": cve_id,
            "run_index": run_index,
            "status": "reproduced",
            "cost_usd": ledger.total_cost_usd,
            "wall_time_s": wall_time_s,
            "flag_token": verifier.flag_token,
            "exploit_filename": exploit_filename,
            "snapshot_ref": snapshot_ref,
            "transcripts": transcript_index,
        }
        (run_dir / "metadata.json").write_text(
            json.dumps(metadata, indent=2, sort_keys=True), encoding="utf-8"
        )
    except OSError as exc:
        raise StorageFailed(f"could not persist artifact under {run_dir}: {exc}") from exc

    return ReproductionArtifact(
        cve_id=cve_id,
        run_dir=str(run_dir),
        snapshot_ref=snapshot_ref,
        exploit_path=str(exploit_path),
        verifier_path=str(verifier_path),
        kb_path=str(kb_path),
        metadata=metadata,
    )
