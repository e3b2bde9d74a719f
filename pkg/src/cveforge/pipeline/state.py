"""Pipeline state machine, cap guard, and the stored-artifact record."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from cveforge.errors import BudgetExceeded, DeadlineExceeded
from cveforge.gateway.ledger import UsageLedger

STAGES = ("ingest", "knowledge", "builder", "exploiter", "verifier", "stored")

# Every failed attempt lands in exactly one bucket, mirroring the blocker
# analysis users will want to replicate. Buckets are failure kinds:
# critic_rejected covers every explicit gate (critic verdicts and an
# exhausted flag-check loop); build_failure covers agent terminal
# outcomes while constructing (cap exhausted, honest give-ups).
FAILURE_BUCKETS = (
    "build_failure",
    "timeout",
    "budget",
    "critic_rejected",
    "format_error",
    "ingest_error",
)

_GATE_REASONS = ("critic_rejected", "flag_check_exhausted")


def failure_bucket(stage: str, reason: str) -> str:
    if stage == "ingest":
        return "ingest_error"
    if reason == "format_error":
        return "format_error"
    if reason in _GATE_REASONS:
        return "critic_rejected"
    return "build_failure"


@dataclass(frozen=True)
class ReproductionArtifact:
    """Pointers into one stored reproduction run directory."""

    cve_id: str
    run_dir: str
    snapshot_ref: str
    exploit_path: str
    verifier_path: str
    kb_path: str
    metadata: dict

    def validate(self) -> list[str]:
        problems = []
        for name in ("exploit_path", "verifier_path", "kb_path"):
            if not Path(getattr(self, name)).is_file():
                problems.append(f"{name} missing: {getattr(self, name)}")
        return problems


class CapGuard:
    """Pre-flight budget/deadline check run before every gateway call and
    every tool dispatch; crossing a cap aborts before the action starts."""

    def __init__(
        self,
        ledger: UsageLedger,
        budget_usd: float,
        deadline_at: float,
        clock=time.monotonic,
    ):
        self.ledger = ledger
        self.budget_usd = budget_usd
        self.deadline_at = deadline_at
        self.clock = clock

    def check(self) -> None:
        if self.clock() > self.deadline_at:
            raise DeadlineExceeded("the per-attempt deadline has passed")
        if self.ledger.total_cost_usd >= self.budget_usd:
            raise BudgetExceeded(
                f"ledger total {self.ledger.total_cost_usd:.6f} USD reached the "
                f"cap of {self.budget_usd:.2f} USD"
            )


@dataclass
class PipelineState:
    """One reproduction attempt's progress; terminal states are immutable
    and stages only ever advance in order."""

    cve_id: str
    ledger: UsageLedger
    stage: str = "ingest"
    status: str = "running"
    failure_stage: str | None = None
    failure_reason: str | None = None
    failure_detail: str = ""
    abort_reason: str | None = None
    started_at: float = field(default_factory=time.time)
    run_dir: str | None = None
    run_index: int = 0
    artifact: ReproductionArtifact | None = None
    trace: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.trace.append((self.stage, self.status))

    @property
    def terminal(self) -> bool:
        return self.status != "running"

    def _require_running(self) -> None:
        if self.terminal:
            raise RuntimeError(
                f"{self.cve_id}: terminal status {self.status_text} is immutable"
            )

    def advance(self, stage: str) -> None:
        self._require_running()
        if STAGES.index(stage) != STAGES.index(self.stage) + 1:
            raise RuntimeError(f"illegal stage transition {self.stage} -> {stage}")
        self.stage = stage
        self.trace.append((stage, self.status))

    def mark_reproduced(self, artifact: ReproductionArtifact) -> None:
        self._require_running()
        if self.stage != "stored":
            raise RuntimeError("reproduced requires the stored stage")
        self.status = "reproduced"
        self.artifact = artifact
        self.trace.append((self.stage, self.status))

    def mark_failed(self, stage: str, reason: str, detail: str = "") -> None:
        self._require_running()
        if reason not in FAILURE_BUCKETS:
            raise ValueError(f"unknown failure bucket: {reason!r}")
        self.status = "failed"
        self.failure_stage = stage
        self.failure_reason = reason
        self.failure_detail = detail
        self.trace.append((self.stage, self.status))

    def mark_aborted(self, reason: str) -> None:
        self._require_running()
        if reason not in ("budget", "time"):
            raise ValueError(f"unknown abort reason: {reason!r}")
        self.status = "aborted"
        self.abort_reason = reason
        self.trace.append((self.stage, self.status))

    @property
    def status_text(self) -> str:
        if self.status == "failed":
            return f"failed({self.failure_stage}, {self.failure_reason})"
        if self.status == "aborted":
            return f"aborted({self.abort_reason})"
        return self.status

    @property
    def reason_bucket(self) -> str | None:
        """The taxonomy bucket this attempt lands in, if it did not succeed."""
        if self.status == "failed":
            return self.failure_reason
        if self.status == "aborted":
            return "timeout" if self.abort_reason == "time" else "budget"
        return None

    def elapsed_s(self) -> float:
        return time.time() - self.started_at
