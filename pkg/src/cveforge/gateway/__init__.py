"""Uniform chat-completion gateway: role routing, tool-call protocol,
usage accounting, and the output-format corrector."""

from cveforge.gateway.gateway import Gateway
from cveforge.gateway.ledger import UsageEntry, UsageLedger
from cveforge.gateway.roles import (
    DEFAULT_BINDINGS,
    ROLE_NAMES,
    ModelRole,
    load_role_bindings,
)
from cveforge.gateway.schemas import OutputSchema, SchemaViolation, field_spec
from cveforge.gateway.backends import (
    OpenAiChatBackend,
    ScriptedBackend,
    TokenUsage,
)
from cveforge.gateway.turns import ChatTurn, ToolInvocationRequest

__all__ = [
    "ChatTurn",
    "DEFAULT_BINDINGS",
    "Gateway",
    "ModelRole",
    "OpenAiChatBackend",
    "OutputSchema",
    "ROLE_NAMES",
    "SchemaViolation",
    "ScriptedBackend",
    "TokenUsage",
    "ToolInvocationRequest",
    "UsageEntry",
    "UsageLedger",
    "field_spec",
    "load_role_bindings",
]
