"""The agent-facing sandbox tools and their dispatch table.

Five tools are exposed to agents (plus the companion that clears
agent-set environment variables). Direct calls raise typed errors;
``dispatch_tool`` converts anything raised into an ok=False ToolResult so
the agent loop can hand the failure back to the model instead of dying.
"""

from __future__ import annotations

import hashlib
import os
import tempfile

from cveforge.errors import (
    DirMissing,
    NotAText,
    SandboxError,
    SandboxFileMissing,
    WriteFailed,
)
from cveforge.gateway.turns import ToolInvocationRequest
from cveforge.sandbox.base import SandboxHandle, ToolResult

TOOL_NAMES = (
    "get_file",
    "write_to_file",
    "execute_ls_command",
    "execute_linux_command",
    "set_environment_variable",
    "clear_environment_variables",
)

READ_ONLY_TOOLSET = ("get_file", "execute_ls_command")
FULL_TOOLSET = TOOL_NAMES

_BINARY_PROBE_BYTES = 8192


def get_file(sandbox: SandboxHandle, path: str, offset: int = 0, count: int = 300) -> ToolResult:
    """Read up to 300 lines of a text file starting at ``offset``.

    The header states the total line count and whether more content
    remains, so the agent can scroll with a larger offset.
    """
    target = sandbox.resolve_path(path)
    if not target.is_file():
        raise SandboxFileMissing(f"no such file: {path}")
    with open(target, "rb") as fh:
        probe = fh.read(_BINARY_PROBE_BYTES)
    if b"\x00" in probe:
        raise NotAText(f"{path} is a binary file; refusing to return bytes")

    offset = max(0, int(offset))
    count = max(0, int(count))
    limit = min(count, sandbox.config.file_read_max_lines)
    lines = target.read_text(encoding="utf-8", errors="replace").splitlines()
    window = lines[offset : offset + limit]
    end = offset + len(window)
    truncated = end < len(lines)
    header = f"{sandbox.relative(target)}: {len(lines)} lines total"
    if window:
        header += f", showing lines {offset + 1}-{end}"
    if truncated:
        header += " (more content remains; scroll with a larger offset)"
    body = "\n".join(window)
    payload = header + ("\n" + body if body else "")
    return ToolResult(
        tool_name="get_file", ok=True, payload=payload, truncated=truncated
    )


def write_to_file(sandbox: SandboxHandle, path: str, content: str) -> ToolResult:
    """Create or overwrite a file atomically, creating parent directories."""
    target = sandbox.resolve_path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=".write-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(content)
            os.replace(tmp_name, target)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise WriteFailed(f"could not write {path}: {exc}") from exc
    digest = hashlib.sha256(content.encode("utf-8")).hexdigest()
    return ToolResult(
        tool_name="write_to_file",
        ok=True,
        payload=(
            f"wrote {len(content.encode('utf-8'))} bytes to "
            f"{sandbox.relative(target)} (sha256 {digest[:16]})"
        ),
    )


def execute_ls_command(sandbox: SandboxHandle, directory: str = ".") -> ToolResult:
    """List a directory, one entry per line; directories get a trailing /."""
    target = sandbox.resolve_path(directory)
    if not target.is_dir():
        raise DirMissing(f"no such directory: {directory}")
    entries = []
    for name in sorted(os.listdir(target)):
        if name.startswith("."):
            continue
        suffix = "/" if (target / name).is_dir() else ""
        entries.append(name + suffix)
    return ToolResult(
        tool_name="execute_ls_command", ok=True, payload="\n".join(entries)
    )


def execute_linux_command(
    sandbox: SandboxHandle, command: str, background: bool = False
) -> ToolResult:
    """Run a shell command from the workdir with stored env vars injected.

    Foreground commands wait up to the configured timeout; background
    commands return after the sample window with a still_running flag.
    """
    return sandbox.backend.execute(sandbox, command, background=bool(background))


def set_environment_variable(sandbox: SandboxHandle, name: str, value: str) -> ToolResult:
    """Set a variable injected into every subsequent command execution."""
    sandbox.env_store.set(name, str(value))
    return ToolResult(
        tool_name="set_environment_variable",
        ok=True,
        payload=f"{name} set for subsequent commands",
    )


def clear_environment_variables(sandbox: SandboxHandle) -> ToolResult:
    """Remove every agent-set environment variable."""
    count = len(sandbox.env_store)
    sandbox.env_store.clear()
    return ToolResult(
        tool_name="clear_environment_variables",
        ok=True,
        payload=f"cleared {count} environment variable(s)",
    )


_HANDLERS = {
    "get_file": get_file,
    "write_to_file": write_to_file,
    "execute_ls_command": execute_ls_command,
    "execute_linux_command": execute_linux_command,
    "set_environment_variable": set_environment_variable,
    "clear_environment_variables": clear_environment_variables,
}

_SCHEMAS: dict[str, dict] = {
    "get_file": {
        "description": "Read up to 300 lines of a text file starting at a line offset.",
        "parameters": {
            "path": {"type": "string", "description": "file path inside the project"},
            "offset": {"type": "integer", "description": "0-based first line to read"},
            "count": {"type": "integer", "description": "number of lines (max 300)"},
        },
        "required": ["path"],
    },
    "write_to_file": {
        "description": "Create or overwrite a file with the given content.",
        "parameters": {
            "path": {"type": "string", "description": "file path inside the project"},
            "content": {"type": "string", "description": "full file content"},
        },
        "required": ["path", "content"],
    },
    "execute_ls_command": {
        "description": "List the entries of a directory inside the project.",
        "parameters": {
            "directory": {"type": "string", "description": "directory to list"},
        },
        "required": ["directory"],
    },
    "execute_linux_command": {
        "description": (
            "Run a Linux shell command from the project root. Foreground "
            "commands are subject to a timeout; set background=true for "
            "long-running services."
        ),
        "parameters": {
            "command": {"type": "string", "description": "shell command line"},
            "background": {"type": "boolean", "description": "run without waiting"},
        },
        "required": ["command"],
    },
    "set_environment_variable": {
        "description": "Set an environment variable for all subsequent commands.",
        "parameters": {
            "name": {"type": "string", "description": "variable name"},
            "value": {"type": "string", "description": "variable value"},
        },
        "required": ["name", "value"],
    },
    "clear_environment_variables": {
        "description": "Clear every environment variable set so far.",
        "parameters": {},
        "required": [],
    },
}


def tool_schemas(toolset) -> list[dict]:
    """Function-call schemas for the given tool names (provider format)."""
    schemas = []
    for name in toolset:
        spec = _SCHEMAS[name]
        schemas.append(
            {
                "name": name,
                "description": spec["description"],
                "parameters": {
                    "type": "object",
                    "properties": spec["parameters"],
                    "required": spec["required"],
                },
            }
        )
    return schemas


def dispatch_tool(sandbox: SandboxHandle, request: ToolInvocationRequest) -> ToolResult:
    """Execute one tool request; failures become ok=False results."""
    handler = _HANDLERS.get(request.tool_name)
    if handler is None:
        return ToolResult(
            tool_name=request.tool_name,
            ok=False,
            payload=f"unknown tool: {request.tool_name}",
        )
    spec = _SCHEMAS[request.tool_name]
    missing = [k for k in spec["required"] if k not in request.arguments]
    unexpected = [k for k in request.arguments if k not in spec["parameters"]]
    if missing or unexpected:
        detail = []
        if missing:
            detail.append(f"missing arguments: {', '.join(missing)}")
        if unexpected:
            detail.append(f"unexpected arguments: {', '.join(unexpected)}")
        return ToolResult(
            tool_name=request.tool_name, ok=False, payload="; ".join(detail)
        )
    try:
        return handler(sandbox, **request.arguments)
    except SandboxError as exc:
        payload = str(exc)
        extra = getattr(exc, "payload", "")
        if extra:
            payload = f"{payload}\n{extra}"
        return ToolResult(tool_name=request.tool_name, ok=False, payload=payload)
    except Exception as exc:  # defensive: a tool bug must not kill the agent loop
        return ToolResult(
            tool_name=request.tool_name,
            ok=False,
            payload=f"tool crashed: {exc.__class__.__name__}: {exc}",
        )
