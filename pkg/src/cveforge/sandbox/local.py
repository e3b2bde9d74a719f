"""Directory-backed sandbox: subprocess execution with process-group
containment, per-command log files, and copy-based snapshots.

This backend is the default for tests and offline runs. It confines
file access to the workdir but cannot enforce network isolation; the
network policy is recorded and honored by the container backend.
"""

from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import time
import uuid
from pathlib import Path
from typing import Protocol

from cveforge.errors import SnapshotFailed, SpawnFailed
from cveforge.sandbox.base import (
    CommandLog,
    EnvVarStore,
    SandboxConfig,
    SandboxHandle,
    ToolResult,
)


class SandboxBackend(Protocol):
    def create(self, *, sandbox_id: str | None = None, source_dir: Path | None = None) -> SandboxHandle: ...

    def execute(self, handle: SandboxHandle, command: str, *, background: bool = False) -> ToolResult: ...

    def snapshot(self, handle: SandboxHandle) -> str: ...

    def restore(self, ref: str) -> SandboxHandle: ...

    def apply_network_policy(self, handle: SandboxHandle, policy: str) -> None: ...

    def close(self, handle: SandboxHandle) -> None: ...


def _base_env(handle: SandboxHandle) -> dict[str, str]:
    env = {
        "PATH": os.environ.get(
            "PATH", "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin"
        ),
        "HOME": str(handle.workdir),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "PYTHONUNBUFFERED": "1",
    }
    env.update(handle.env_store.as_dict())
    return env


def _kill_group(pid: int) -> None:
    try:
        os.killpg(os.getpgid(pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


class LocalSandboxBackend:
    """Plain-directory sandboxes under one root, snapshots as copies."""

    def __init__(self, root: str | Path, config: SandboxConfig | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = config or SandboxConfig()

    # --- lifecycle -----------------------------------------------------------

    def create(
        self, *, sandbox_id: str | None = None, source_dir: Path | None = None
    ) -> SandboxHandle:
        sandbox_id = sandbox_id or f"sbx-{uuid.uuid4().hex[:12]}"
        workdir = self.root / sandbox_id / "workdir"
        if workdir.exists():
            raise SpawnFailed(f"sandbox {sandbox_id} already exists")
        if source_dir is not None:
            shutil.copytree(source_dir, workdir)
        else:
            workdir.mkdir(parents=True)
        handle = SandboxHandle(
            sandbox_id=sandbox_id,
            workdir=workdir,
            backend=self,
            config=self.config,
            network_policy=self.config.network_policy,
        )
        handle.log_dir.mkdir(exist_ok=True)
        return handle

    def close(self, handle: SandboxHandle) -> None:
        for proc in handle._background_procs:
            if proc.poll() is None:
                _kill_group(proc.pid)
        handle._background_procs.clear()

    def apply_network_policy(self, handle: SandboxHandle, policy: str) -> None:
        # Recorded only: a plain directory cannot firewall its processes.
        pass

    # --- command execution ---------------------------------------------------

    def execute(
        self, handle: SandboxHandle, command: str, *, background: bool = False
    ) -> ToolResult:
        if not command.strip():
            raise SpawnFailed("empty command")
        seq = handle.next_seq()
        out_path = handle.log_dir / f"{seq:04d}_out.log"
        err_path = handle.log_dir / f"{seq:04d}_err.log"
        started = time.monotonic()
        try:
            with open(out_path, "wb") as out, open(err_path, "wb") as err:
                proc = subprocess.Popen(
                    ["/bin/sh", "-c", command],
                    cwd=handle.workdir,
                    env=_base_env(handle),
                    stdout=out,
                    stderr=err,
                    start_new_session=True,
                )
        except OSError as exc:
            raise SpawnFailed(f"could not start command: {exc}") from exc

        log = CommandLog(
            command=command,
            exit_code=None,
            stdout_path=out_path,
            stderr_path=err_path,
            started_at=started,
            ended_at=None,
            background=background,
            pid=proc.pid,
        )
        handle.command_logs.append(log)

        if background:
            return self._sample_background(handle, proc, log)
        return self._wait_foreground(handle, proc, log)

    def _wait_foreground(self, handle, proc, log) -> ToolResult:
        from cveforge.errors import CommandTimeout

        timeout = handle.config.foreground_timeout_s
        try:
            proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            _kill_group(proc.pid)
            proc.wait()
            log.ended_at = time.monotonic()
            # exit_code stays None: the command never completed on its own
            body, _ = self._payload_body(handle, log)
            raise CommandTimeout(
                f"command exceeded the {timeout:g}s timeout and was killed",
                payload=(
                    f"command timed out after {timeout:g}s; process group killed\n"
                    + body
                ),
                log_path=handle.relative(log.stdout_path),
            )
        log.ended_at = time.monotonic()
        log.exit_code = proc.returncode
        body, truncated = self._payload_body(handle, log)
        payload = f"exit code: {proc.returncode}\n{body}"
        return ToolResult(
            tool_name="execute_linux_command",
            ok=True,
            payload=payload,
            log_path=handle.relative(log.stdout_path),
            truncated=truncated,
        )

    def _sample_background(self, handle, proc, log) -> ToolResult:
        window = handle.config.background_sample_s
        try:
            proc.wait(timeout=window)
        except subprocess.TimeoutExpired:
            pass
        still_running = proc.poll() is None
        if still_running:
            handle.track_background(proc)
        else:
            log.ended_at = time.monotonic()
            log.exit_code = proc.returncode
        body, truncated = self._payload_body(handle, log)
        status = "still running" if still_running else f"exited with {proc.returncode}"
        payload = f"background command {status} after {window:g}s sample window\n{body}"
        return ToolResult(
            tool_name="execute_linux_command",
            ok=True,
            payload=payload,
            log_path=handle.relative(log.stdout_path),
            truncated=truncated,
            background=True,
            still_running=still_running,
        )

    def _payload_body(self, handle, log) -> tuple[str, bool]:
        """Last <=100 lines of combined output plus both log paths."""
        lines = (
            _read_text(log.stdout_path).splitlines()
            + _read_text(log.stderr_path).splitlines()
        )
        limit = handle.config.payload_max_lines
        truncated = len(lines) > limit
        shown = "\n".join(lines[-limit:]) if lines else "(no output)"
        header = (
            f"stdout log: {handle.relative(log.stdout_path)}\n"
            f"stderr log: {handle.relative(log.stderr_path)}\n"
            "--- output (last 100 lines at most) ---"
        )
        return f"{header}\n{shown}", truncated

    # --- snapshots -----------------------------------------------------------

    def snapshot(self, handle: SandboxHandle) -> str:
        ref = f"snap-{uuid.uuid4().hex[:12]}"
        dest = self._snapshot_dir(ref)
        try:
            shutil.copytree(handle.workdir, dest / "workdir")
            meta = {
                "sandbox_id": handle.sandbox_id,
                "env": handle.env_store.as_dict(),
                "seq": handle._seq,
                "network_policy": handle.network_policy,
            }
            (dest / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        except OSError as exc:
            raise SnapshotFailed(f"snapshot failed: {exc}") from exc
        return ref

    def restore(self, ref: str) -> SandboxHandle:
        source = self._snapshot_dir(ref)
        if not (source / "workdir").is_dir():
            raise SnapshotFailed(f"unknown snapshot reference: {ref!r}")
        meta = json.loads((source / "meta.json").read_text(encoding="utf-8"))
        sandbox_id = f"sbx-{uuid.uuid4().hex[:12]}"
        workdir = self.root / sandbox_id / "workdir"
        shutil.copytree(source / "workdir", workdir)
        handle = SandboxHandle(
            sandbox_id=sandbox_id,
            workdir=workdir,
            backend=self,
            config=self.config,
            network_policy=meta.get("network_policy", "full"),
        )
        handle.log_dir.mkdir(exist_ok=True)
        store = EnvVarStore()
        for name, value in meta.get("env", {}).items():
            store.set(name, value)
        handle.env_store = store
        handle._seq = int(meta.get("seq", 0))
        return handle

    def _snapshot_dir(self, ref: str) -> Path:
        return self.root / "_snapshots" / ref


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return ""
