"""ReAct-style agent loop and the developer/critic feedback cycle."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

from cveforge.agents.spec import (
    OUTCOME_ABORTED,
    OUTCOME_BUDGET,
    OUTCOME_CAP,
    OUTCOME_FINAL,
    OUTCOME_FORMAT,
    OUTCOME_GAVE_UP,
    AgentSpec,
    AgentTranscript,
    CritiqueVerdict,
)
from cveforge.errors import BudgetExceeded, DeadlineExceeded, FormatError
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.turns import system_turn, tool_result_turn, user_turn
from cveforge.sandbox.base import SandboxHandle
from cveforge.sandbox.tools import dispatch_tool, tool_schemas

_call_ids = itertools.count(1)

TOOL_NOT_PERMITTED = "ToolNotPermitted"


def run_agent(
    spec: AgentSpec,
    context_blocks: Sequence[str],
    sandbox: SandboxHandle | None,
    gateway: Gateway,
    *,
    guard=None,
    feedback: str | None = None,
    on_transcript: Callable[[AgentTranscript], None] | None = None,
) -> tuple[AgentTranscript, dict | None]:
    """Drive one agent to a final answer or a terminal condition.

    The loop completes, dispatches requested tools, appends their results,
    and repeats until the model emits a final answer (parsed through the
    format corrector) or a cap/budget/format condition ends the run. Tool
    requests outside the permitted toolset are answered with a
    ToolNotPermitted result and never execute. Terminal conditions are
    encoded in the transcript outcome, not raised (the deadline control
    exception is the one exception: it aborts the whole attempt).
    """
    transcript = AgentTranscript(agent=spec.role_name)
    history = [
        system_turn(spec.system_prompt + "\n\n" + spec.final_answer_schema.describe())
    ]
    blocks = list(context_blocks)
    if feedback:
        blocks.append(f"Feedback from the previous review:\n{feedback}")
    history.append(user_turn("\n\n".join(blocks)))
    for turn in history:
        transcript.append(turn)

    schemas = tool_schemas(spec.toolset) if spec.toolset else None
    executed = 0
    answer: dict | None = None

    try:
        while True:
            _checkpoint(guard)
            turn, _ = gateway.complete(spec.role_name, history, tool_schema=schemas)
            history.append(turn)
            transcript.append(turn)

            if not turn.tool_calls:
                answer = gateway.enforce_format(
                    spec.role_name, turn.content, spec.final_answer_schema
                )
                transcript.outcome = _classify_answer(spec, answer)
                break

            terminal = None
            for call in turn.tool_calls:
                _checkpoint(guard)
                if call.tool_name not in spec.toolset:
                    reply = tool_result_turn(
                        call.call_id,
                        f"{TOOL_NOT_PERMITTED}: {call.tool_name} is not available "
                        f"to this agent",
                    )
                    history.append(reply)
                    transcript.append(reply)
                    continue
                if executed >= spec.max_tool_calls:
                    reply = tool_result_turn(
                        call.call_id,
                        f"tool-call limit reached ({spec.max_tool_calls}); "
                        "no further tools will execute",
                    )
                    history.append(reply)
                    transcript.append(reply)
                    terminal = OUTCOME_CAP
                    break
                result = dispatch_tool(sandbox, call)
                executed += 1
                reply = tool_result_turn(call.call_id, result.render())
                history.append(reply)
                transcript.append(reply)
            if terminal:
                transcript.outcome = terminal
                break
    except BudgetExceeded:
        transcript.outcome = OUTCOME_BUDGET
    except FormatError:
        transcript.outcome = OUTCOME_FORMAT
    except DeadlineExceeded:
        transcript.outcome = OUTCOME_ABORTED
        transcript.tool_calls_made = executed
        if on_transcript is not None:
            on_transcript(transcript)
        raise
    transcript.tool_calls_made = executed
    if on_transcript is not None:
        on_transcript(transcript)
    return transcript, answer


def _checkpoint(guard) -> None:
    if guard is not None:
        guard.check()


def _classify_answer(spec: AgentSpec, answer: dict) -> str:
    if spec.decision_field and not answer.get(spec.decision_field):
        return OUTCOME_GAVE_UP
    return OUTCOME_FINAL


@dataclass
class CycleResult:
    """Everything a stage needs from one developer/critic cycle."""

    answer: dict | None
    accepted: bool
    verdict: CritiqueVerdict | None
    dev_transcripts: list[AgentTranscript] = field(default_factory=list)
    critic_transcripts: list[AgentTranscript] = field(default_factory=list)
    failure_reason: str | None = None

    @property
    def transcripts(self) -> list[AgentTranscript]:
        ordered = []
        for dev, critic in itertools.zip_longest(
            self.dev_transcripts, self.critic_transcripts
        ):
            if dev:
                ordered.append(dev)
            if critic:
                ordered.append(critic)
        return ordered


def run_dev_critic_cycle(
    dev: AgentSpec,
    critic: AgentSpec,
    context_blocks: Sequence[str],
    sandbox: SandboxHandle | None,
    gateway: Gateway,
    max_feedback: int,
    *,
    critic_context: Callable[[AgentTranscript, dict | None], Sequence[str]],
    guard=None,
    on_transcript: Callable[[AgentTranscript], None] | None = None,
) -> CycleResult:
    """Run developer then critic, revising at most ``max_feedback`` times.

    The developer reruns with the critic's feedback appended only while
    iterations remain; the last verdict is returned. Terminal developer
    outcomes (cap, budget, format) propagate as a rejected result without
    consulting the critic.
    """
    if max_feedback < 0:
        raise ValueError("max_feedback must be >= 0")
    result = CycleResult(answer=None, accepted=False, verdict=None)
    feedback: str | None = None

    for _ in range(max_feedback + 1):
        dev_transcript, answer = run_agent(
            dev,
            context_blocks,
            sandbox,
            gateway,
            guard=guard,
            feedback=feedback,
            on_transcript=on_transcript,
        )
        result.dev_transcripts.append(dev_transcript)
        result.answer = answer

        if dev_transcript.outcome not in (OUTCOME_FINAL, OUTCOME_GAVE_UP):
            result.failure_reason = dev_transcript.outcome
            return result

        critic_transcript, verdict_answer = run_agent(
            critic,
            critic_context(dev_transcript, answer),
            sandbox,
            gateway,
            guard=guard,
            on_transcript=on_transcript,
        )
        result.critic_transcripts.append(critic_transcript)
        if critic_transcript.outcome != OUTCOME_FINAL:
            result.failure_reason = critic_transcript.outcome
            return result

        verdict = CritiqueVerdict.from_answer(verdict_answer)
        result.verdict = verdict
        if verdict.accepted:
            result.accepted = True
            return result
        feedback = verdict.feedback

    result.failure_reason = "critic_rejected"
    return result
