"""Exception types shared across the pipeline."""

from __future__ import annotations


class CveForgeError(Exception):
    """Base class for all errors raised by this package."""


# --- CVE ingestion ---------------------------------------------------------

class IngestError(CveForgeError):
    """Base class for failures while gathering CVE resources."""


class CveNotFound(IngestError):
    """The registry has no record for the requested CVE id."""


class RegistryUnavailable(IngestError):
    """The registry backend could not be reached or returned garbage."""


class MalformedRecord(IngestError):
    """A CVE record violates the schema this pipeline depends on."""


class NoAffectedVersion(IngestError):
    """No available tag is classified as affected."""


class AmbiguousVersioning(IngestError):
    """No available tag could be parsed as a version at all."""


class TagMissing(IngestError):
    """The requested version does not exist as a tag or release."""


class DownloadFailed(IngestError):
    """Source download failed."""


class EmptyTree(IngestError):
    """The downloaded source tree contains no files."""


class DiffUnavailable(IngestError):
    """A patch commit's diff could not be fetched."""


# --- LLM gateway ------------------------------------------------------------

class GatewayError(CveForgeError):
    """Base class for chat-completion gateway failures."""


class ProviderError(GatewayError):
    """Transport-level provider failure; retryable."""


class BudgetExceeded(GatewayError):
    """The per-attempt cost cap has been reached; the call was not made."""


class FormatError(GatewayError):
    """Output could not be coerced into the required structure."""


class MissingRole(GatewayError):
    """A required agent role has no model binding."""


class UnknownProvider(GatewayError):
    """A binding references a provider that is not configured."""


class ScriptExhausted(GatewayError):
    """The scripted backend ran out of canned turns for a role.

    Under test this indicates a fixture/implementation mismatch and must
    fail the test rather than be swallowed.
    """


# --- Sandbox ----------------------------------------------------------------

class SandboxError(CveForgeError):
    """Base class for sandbox tool failures."""


class PathEscapesSandbox(SandboxError):
    """A path resolves outside the sandbox containment root."""


class SandboxFileMissing(SandboxError):
    """get_file target does not exist or is not a regular file."""


class NotAText(SandboxError):
    """Binary content detected; a notice is returned instead of bytes."""


class WriteFailed(SandboxError):
    """write_to_file could not complete."""


class DirMissing(SandboxError):
    """execute_ls_command target is not a directory."""


class CommandTimeout(SandboxError):
    """Foreground command exceeded its timeout; process group was killed."""

    def __init__(self, message: str, *, payload: str = "", log_path: str | None = None):
        super().__init__(message)
        self.payload = payload
        self.log_path = log_path


class SpawnFailed(SandboxError):
    """The command process could not be started."""


class InvalidVariableName(SandboxError):
    """Environment variable name is not a valid identifier."""


class SnapshotFailed(SandboxError):
    """Snapshot could not be taken or the reference is unknown."""


# --- Pipeline ---------------------------------------------------------------

class DeadlineExceeded(CveForgeError):
    """The per-attempt wall-clock deadline passed; control exception caught
    by the pipeline driver and turned into status aborted(time)."""


class StageFailure(CveForgeError):
    """A stage ended without producing an accepted result.

    ``reason`` carries the detailed cause (e.g. critic_rejected,
    cap_exhausted, format_error); the pipeline driver maps it onto the
    reported failure taxonomy.
    """

    def __init__(self, stage: str, reason: str, detail: str = ""):
        super().__init__(f"{stage}: {reason}" + (f" ({detail})" if detail else ""))
        self.stage = stage
        self.reason = reason
        self.detail = detail


class StorageFailed(CveForgeError):
    """Persisting a reproduction artifact failed."""


class ArtifactNotFound(CveForgeError):
    """No stored artifact exists for the requested CVE."""
