"""Container-backed sandbox driven through the docker CLI.

The sandbox workdir is a host directory bind-mounted into a long-running
container at /work, so the file tools share the local backend's code
paths while commands execute inside the container. Snapshots combine a
``docker commit`` with a copy of the mounted workdir. Requires a docker
CLI on PATH; the local backend is the default everywhere else.
"""

from __future__ import annotations

import shutil
import subprocess
import time
import uuid
from pathlib import Path

from cveforge.errors import SnapshotFailed, SpawnFailed
from cveforge.sandbox.base import (
    CommandLog,
    EnvVarStore,
    SandboxConfig,
    SandboxHandle,
    ToolResult,
)
from cveforge.sandbox.local import LocalSandboxBackend

DEFAULT_IMAGE = "python:3.11-slim"
CONTAINER_WORKDIR = "/work"


def _docker(*args: str, timeout: float | None = 60.0) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["docker", *args], capture_output=True, text=True, timeout=timeout
    )


class ContainerSandboxBackend(LocalSandboxBackend):
    """File tools run against the bind-mounted host dir; commands run in
    the container. Restricted network policy disconnects the container
    from its bridge network."""

    def __init__(
        self,
        root: str | Path,
        config: SandboxConfig | None = None,
        image: str = DEFAULT_IMAGE,
    ):
        super().__init__(root, config)
        self.image = image
        self._containers: dict[str, str] = {}

    def create(
        self, *, sandbox_id: str | None = None, source_dir: Path | None = None
    ) -> SandboxHandle:
        handle = super().create(sandbox_id=sandbox_id, source_dir=source_dir)
        container = f"cveforge-{handle.sandbox_id}"
        result = _docker(
            "run",
            "--detach",
            "--name",
            container,
            "--volume",
            f"{handle.workdir}:{CONTAINER_WORKDIR}",
            "--workdir",
            CONTAINER_WORKDIR,
            self.image,
            "sleep",
            "infinity",
        )
        if result.returncode != 0:
            raise SpawnFailed(f"docker run failed: {result.stderr.strip()}")
        self._containers[handle.sandbox_id] = container
        return handle

    def execute(
        self, handle: SandboxHandle, command: str, *, background: bool = False
    ) -> ToolResult:
        if not command.strip():
            raise SpawnFailed("empty command")
        container = self._containers[handle.sandbox_id]
        seq = handle.next_seq()
        out_path = handle.log_dir / f"{seq:04d}_out.log"
        err_path = handle.log_dir / f"{seq:04d}_err.log"
        marker = f"cveforge-cmd-{uuid.uuid4().hex[:8]}"
        env_flags = []
        for name, value in handle.env_store.items():
            env_flags += ["--env", f"{name}={value}"]
        argv = [
            "docker",
            "exec",
            *env_flags,
            container,
            "/bin/sh",
            "-c",
            f": {marker}; {command}",
        ]
        started = time.monotonic()
        try:
            with open(out_path, "wb") as out, open(err_path, "wb") as err:
                proc = subprocess.Popen(argv, stdout=out, stderr=err)
        except OSError as exc:
            raise SpawnFailed(f"could not start docker exec: {exc}") from exc

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

        from cveforge.errors import CommandTimeout

        timeout = handle.config.foreground_timeout_s
        try:
            proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            _docker("exec", container, "pkill", "-KILL", "-f", marker)
            proc.kill()
            proc.wait()
            log.ended_at = time.monotonic()
            body, _ = self._payload_body(handle, log)
            raise CommandTimeout(
                f"command exceeded the {timeout:g}s timeout and was killed",
                payload=(
                    f"command timed out after {timeout:g}s; processes killed\n{body}"
                ),
                log_path=handle.relative(log.stdout_path),
            )
        log.ended_at = time.monotonic()
        log.exit_code = proc.returncode
        body, truncated = self._payload_body(handle, log)
        return ToolResult(
            tool_name="execute_linux_command",
            ok=True,
            payload=f"exit code: {proc.returncode}\n{body}",
            log_path=handle.relative(log.stdout_path),
            truncated=truncated,
        )

    def apply_network_policy(self, handle: SandboxHandle, policy: str) -> None:
        container = self._containers.get(handle.sandbox_id)
        if container is None:
            return
        if policy == "restricted":
            _docker("network", "disconnect", "bridge", container)
        else:
            _docker("network", "connect", "bridge", container)

    def snapshot(self, handle: SandboxHandle) -> str:
        container = self._containers[handle.sandbox_id]
        ref = f"snap-{uuid.uuid4().hex[:12]}"
        result = _docker("commit", container, f"cveforge/{ref}", timeout=300.0)
        if result.returncode != 0:
            raise SnapshotFailed(f"docker commit failed: {result.stderr.strip()}")
        dest = self._snapshot_dir(ref)
        try:
            shutil.copytree(handle.workdir, dest / "workdir")
            meta = {
                "sandbox_id": handle.sandbox_id,
                "env": handle.env_store.as_dict(),
                "seq": handle._seq,
                "network_policy": handle.network_policy,
                "image": f"cveforge/{ref}",
            }
            import json

            (dest / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        except OSError as exc:
            raise SnapshotFailed(f"snapshot failed: {exc}") from exc
        return ref

    def restore(self, ref: str) -> SandboxHandle:
        import json

        source = self._snapshot_dir(ref)
        if not (source / "meta.json").is_file():
            raise SnapshotFailed(f"unknown snapshot reference: {ref!r}")
        meta = json.loads((source / "meta.json").read_text(encoding="utf-8"))
        previous_image, self.image = self.image, meta.get("image", self.image)
        try:
            handle = self.create(source_dir=source / "workdir")
        finally:
            self.image = previous_image
        store = EnvVarStore()
        for name, value in meta.get("env", {}).items():
            store.set(name, value)
        handle.env_store = store
        handle._seq = int(meta.get("seq", 0))
        handle.network_policy = meta.get("network_policy", "full")
        return handle

    def close(self, handle: SandboxHandle) -> None:
        super().close(handle)
        container = self._containers.pop(handle.sandbox_id, None)
        if container:
            _docker("rm", "--force", container)
