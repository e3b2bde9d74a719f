"""Agent definitions, transcripts, and critique verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from cveforge.gateway.schemas import OutputSchema
from cveforge.gateway.turns import ChatTurn
from cveforge.sandbox.tools import TOOL_NAMES

DEFAULT_MAX_TOOL_CALLS = 60

OUTCOME_FINAL = "final_answer"
OUTCOME_GAVE_UP = "gave_up"
OUTCOME_CAP = "cap_exhausted"
OUTCOME_BUDGET = "budget_exhausted"
OUTCOME_FORMAT = "format_error"
# Partial transcripts persisted when the attempt-wide deadline fires mid-run.
OUTCOME_ABORTED = "aborted"

_WRITE_EXECUTE_TOOLS = frozenset(
    {"write_to_file", "execute_linux_command", "set_environment_variable",
     "clear_environment_variables"}
)


@dataclass(frozen=True)
class AgentSpec:
    """One agent's contract: role, prompt, permitted tools, answer schema."""

    role_name: str
    system_prompt: str
    toolset: tuple[str, ...]
    final_answer_schema: OutputSchema
    max_tool_calls: int = DEFAULT_MAX_TOOL_CALLS
    is_critic: bool = False
    read_only: bool = False
    # Name of the boolean answer field that distinguishes an honest
    # failure report ("gave up") from a successful final answer.
    decision_field: str | None = None

    def __post_init__(self):
        unknown = [t for t in self.toolset if t not in TOOL_NAMES]
        if unknown:
            raise ValueError(f"{self.role_name}: unregistered tools {unknown}")
        if self.is_critic and self.toolset:
            raise ValueError(
                f"{self.role_name}: critic agents never receive tool access"
            )
        if self.read_only:
            forbidden = [t for t in self.toolset if t in _WRITE_EXECUTE_TOOLS]
            if forbidden:
                raise ValueError(
                    f"{self.role_name}: read-only spec contains {forbidden}"
                )
        if self.max_tool_calls <= 0:
            raise ValueError("max_tool_calls must be positive")


@dataclass
class AgentTranscript:
    """Append-only record of one agent run, persisted verbatim."""

    agent: str
    turns: list[ChatTurn] = field(default_factory=list)
    tool_calls_made: int = 0
    outcome: str = OUTCOME_FINAL

    def append(self, turn: ChatTurn) -> None:
        self.turns.append(turn)

    def to_records(self) -> list[dict]:
        records = [dict(record="turn", **turn.to_record()) for turn in self.turns]
        records.append(
            {
                "record": "meta",
                "agent": self.agent,
                "tool_calls_made": self.tool_calls_made,
                "outcome": self.outcome,
            }
        )
        return records

    def save(self, path: str | Path) -> Path:
        """Write line-delimited records; one file per agent run."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.to_records():
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "AgentTranscript":
        turns: list[ChatTurn] = []
        meta: dict = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                if record.get("record") == "turn":
                    turns.append(ChatTurn.from_record(record))
                elif record.get("record") == "meta":
                    meta = record
        transcript = cls(agent=meta.get("agent", "unknown"), turns=turns)
        transcript.tool_calls_made = int(meta.get("tool_calls_made", 0))
        transcript.outcome = meta.get("outcome", OUTCOME_FINAL)
        return transcript


@dataclass(frozen=True)
class CritiqueVerdict:
    """A critic's binary gate plus actionable feedback."""

    analysis: str
    accepted: bool
    feedback: str = ""

    def __post_init__(self):
        if not self.accepted and not self.feedback.strip():
            raise ValueError("a rejection must carry non-empty feedback")

    @classmethod
    def from_answer(cls, answer: dict) -> "CritiqueVerdict":
        return cls(
            analysis=str(answer.get("analysis", "")),
            accepted=bool(answer.get("accepted")),
            feedback=str(answer.get("feedback", "")),
        )
