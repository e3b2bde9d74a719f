"""Sandbox types: handle, env-var store, tool results, command logs.

One handle exists per reproduction attempt; every agent in that attempt
targets the same handle. Tool calls on a handle are serialized by the
agent loop, and all paths handed back to agents are workdir-relative so
transcripts stay stable across runs.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from cveforge.errors import InvalidVariableName, PathEscapesSandbox

if TYPE_CHECKING:
    from cveforge.sandbox.local import SandboxBackend

_ENV_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

NETWORK_POLICIES = ("full", "restricted")

LOG_DIR_NAME = ".logs"


@dataclass
class SandboxConfig:
    """Limits and knobs; defaults match production, tests scale them down."""

    foreground_timeout_s: float = 300.0
    background_sample_s: float = 5.0
    payload_max_lines: int = 100
    file_read_max_lines: int = 300
    network_policy: str = "full"


@dataclass(frozen=True)
class ToolResult:
    """Uniform result of one tool invocation, as shown to the agent."""

    tool_name: str
    ok: bool
    payload: str
    log_path: str | None = None
    truncated: bool = False
    background: bool = False
    still_running: bool | None = None

    def render(self) -> str:
        """Text form appended to the conversation as the tool's reply."""
        if self.ok:
            return self.payload
        return f"ERROR: {self.payload}"


@dataclass
class CommandLog:
    """Bookkeeping for one execute_linux_command invocation."""

    command: str
    exit_code: int | None
    stdout_path: Path
    stderr_path: Path
    started_at: float
    ended_at: float | None
    background: bool = False
    pid: int | None = None


class EnvVarStore:
    """Ordered name->value map injected into every command execution."""

    def __init__(self):
        self._vars: dict[str, str] = {}

    def set(self, name: str, value: str) -> None:
        if not _ENV_NAME_RE.match(name):
            raise InvalidVariableName(f"not a valid environment variable name: {name!r}")
        self._vars[name] = str(value)

    def clear(self) -> None:
        self._vars.clear()

    def as_dict(self) -> dict[str, str]:
        return dict(self._vars)

    def items(self):
        return self._vars.items()

    def __len__(self) -> int:
        return len(self._vars)


@dataclass
class SandboxHandle:
    """A live sandbox: workdir, env store, logs, and its backend."""

    sandbox_id: str
    workdir: Path
    backend: "SandboxBackend"
    config: SandboxConfig
    env_store: EnvVarStore = field(default_factory=EnvVarStore)
    network_policy: str = "full"
    command_logs: list[CommandLog] = field(default_factory=list)
    _seq: int = 0
    _seq_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _background_procs: list = field(default_factory=list, repr=False)

    @property
    def log_dir(self) -> Path:
        return self.workdir / LOG_DIR_NAME

    def next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def resolve_path(self, path: str) -> Path:
        """Resolve an agent-supplied path; reject anything escaping workdir.

        Relative paths resolve against the workdir (agents start in the
        project root). Symlinks are resolved before the containment check.
        """
        candidate = Path(path)
        if not candidate.is_absolute():
            candidate = self.workdir / candidate
        resolved = candidate.resolve()
        root = self.workdir.resolve()
        if resolved != root and root not in resolved.parents:
            raise PathEscapesSandbox(f"path escapes the sandbox: {path!r}")
        return resolved

    def relative(self, path: Path) -> str:
        """Workdir-relative display form for paths returned to agents."""
        return str(path.resolve().relative_to(self.workdir.resolve()))

    def set_network_policy(self, policy: str) -> None:
        if policy not in NETWORK_POLICIES:
            raise ValueError(f"unknown network policy: {policy!r}")
        self.network_policy = policy
        self.backend.apply_network_policy(self, policy)

    def track_background(self, proc) -> None:
        self._background_procs.append(proc)

    def close(self) -> None:
        """Kill background processes still running; called at pipeline end."""
        self.backend.close(self)
