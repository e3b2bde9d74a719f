"""Generic agent runner: prompt assembly, tool dispatch loop, tool-call
caps, transcript capture, and the developer/critic feedback cycle."""

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
from cveforge.agents.runner import CycleResult, run_agent, run_dev_critic_cycle

__all__ = [
    "AgentSpec",
    "AgentTranscript",
    "CritiqueVerdict",
    "CycleResult",
    "OUTCOME_ABORTED",
    "OUTCOME_BUDGET",
    "OUTCOME_CAP",
    "OUTCOME_FINAL",
    "OUTCOME_FORMAT",
    "OUTCOME_GAVE_UP",
    "run_agent",
    "run_dev_critic_cycle",
]
