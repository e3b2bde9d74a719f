"""Isolated per-CVE execution environments and the agent-facing tools."""

from cveforge.sandbox.base import (
    CommandLog,
    EnvVarStore,
    SandboxConfig,
    SandboxHandle,
    ToolResult,
)
from cveforge.sandbox.local import LocalSandboxBackend
from cveforge.sandbox.container import ContainerSandboxBackend
from cveforge.sandbox.tools import (
    FULL_TOOLSET,
    READ_ONLY_TOOLSET,
    TOOL_NAMES,
    clear_environment_variables,
    dispatch_tool,
    execute_linux_command,
    execute_ls_command,
    get_file,
    set_environment_variable,
    tool_schemas,
    write_to_file,
)

__all__ = [
    "CommandLog",
    "ContainerSandboxBackend",
    "EnvVarStore",
    "FULL_TOOLSET",
    "LocalSandboxBackend",
    "READ_ONLY_TOOLSET",
    "SandboxConfig",
    "SandboxHandle",
    "TOOL_NAMES",
    "ToolResult",
    "clear_environment_variables",
    "dispatch_tool",
    "execute_linux_command",
    "execute_ls_command",
    "get_file",
    "set_environment_variable",
    "tool_schemas",
    "write_to_file",
]
