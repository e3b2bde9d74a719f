"""Run configuration: role bindings, caps, sandbox, providers.

One declarative YAML document with sections {models, caps, sandbox,
providers, run}; command-line flags always win over file values, and a
mock fixture directory may carry its own config.yaml as the weakest
layer. Secrets never live in the config file - only in environment
variables.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from cveforge.errors import CveForgeError
from cveforge.gateway.roles import ModelRole, load_role_bindings

DEFAULT_BUDGET_USD = 5.00
DEFAULT_DEADLINE_MINUTES = 45.0
DEFAULT_TOOL_CALLS = 60
DEFAULT_PARALLELISM = 4
DEFAULT_ROUNDS = 3
DEFAULT_KB_TOKEN_BUDGET = 8000
DEFAULT_CRITIC_CONTEXT_TOKENS = 12000


class ConfigError(CveForgeError):
    pass


@dataclass(frozen=True)
class FeedbackCaps:
    builder: int = 1
    exploiter: int = 1
    verifier_flag_checks: int = 5
    verifier_critics: int = 5


@dataclass(frozen=True)
class Caps:
    budget_usd: float = DEFAULT_BUDGET_USD
    deadline_minutes: float = DEFAULT_DEADLINE_MINUTES
    tool_calls: int = DEFAULT_TOOL_CALLS
    feedback: FeedbackCaps = field(default_factory=FeedbackCaps)

    def __post_init__(self):
        positives = {
            "budget_usd": self.budget_usd,
            "deadline_minutes": self.deadline_minutes,
            "tool_calls": self.tool_calls,
            "feedback.verifier_flag_checks": self.feedback.verifier_flag_checks,
            "feedback.verifier_critics": self.feedback.verifier_critics,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"cap {name} must be positive, got {value}")
        if self.feedback.builder < 0 or self.feedback.exploiter < 0:
            raise ConfigError("feedback iteration caps must be >= 0")

    @property
    def deadline_seconds(self) -> float:
        return self.deadline_minutes * 60.0


@dataclass(frozen=True)
class SandboxSettings:
    backend: str = "local"
    foreground_timeout_s: float = 300.0
    background_sample_s: float = 5.0
    container_image: str = "python:3.11-slim"

    def __post_init__(self):
        if self.backend not in ("local", "container"):
            raise ConfigError(f"unknown sandbox backend: {self.backend!r}")
        if self.foreground_timeout_s <= 0 or self.background_sample_s <= 0:
            raise ConfigError("sandbox timeouts must be positive")


@dataclass(frozen=True)
class RunConfig:
    model_overrides: dict = field(default_factory=dict)
    providers: dict = field(default_factory=dict)
    caps: Caps = field(default_factory=Caps)
    sandbox: SandboxSettings = field(default_factory=SandboxSettings)
    parallelism: int = DEFAULT_PARALLELISM
    rounds: int = DEFAULT_ROUNDS
    artifact_root: str = "artifacts"
    work_root: str = ".cveforge"
    mock_dir: str | None = None
    fixed_flag_token: str | None = None
    repo_url: str = ""
    interpreter: str = "python3"
    kb_token_budget: int = DEFAULT_KB_TOKEN_BUDGET
    critic_context_tokens: int = DEFAULT_CRITIC_CONTEXT_TOKENS
    transport_retry_delay_s: float = 0.5
    registry_url: str = ""

    def __post_init__(self):
        if self.parallelism <= 0 or self.rounds <= 0:
            raise ConfigError("parallelism and rounds must be positive")

    @property
    def mock_mode(self) -> bool:
        return self.mock_dir is not None

    @property
    def exploit_filename(self) -> str:
        extensions = {"python3": "py", "python": "py", "node": "js", "sh": "sh"}
        return f"exploit.{extensions.get(self.interpreter, 'py')}"

    def role_bindings(self) -> dict[str, ModelRole]:
        return load_role_bindings(self.model_overrides, self.providers)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _caps_from_doc(doc: dict) -> Caps:
    feedback_doc = doc.get("feedback", {})
    feedback = FeedbackCaps(
        builder=int(feedback_doc.get("builder", 1)),
        exploiter=int(feedback_doc.get("exploiter", 1)),
        verifier_flag_checks=int(feedback_doc.get("verifier_flag_checks", 5)),
        verifier_critics=int(feedback_doc.get("verifier_critics", 5)),
    )
    return Caps(
        budget_usd=float(doc.get("budget_usd", DEFAULT_BUDGET_USD)),
        deadline_minutes=float(doc.get("deadline_minutes", DEFAULT_DEADLINE_MINUTES)),
        tool_calls=int(doc.get("tool_calls", DEFAULT_TOOL_CALLS)),
        feedback=feedback,
    )


def _sandbox_from_doc(doc: dict) -> SandboxSettings:
    return SandboxSettings(
        backend=doc.get("backend", "local"),
        foreground_timeout_s=float(doc.get("foreground_timeout_s", 300.0)),
        background_sample_s=float(doc.get("background_sample_s", 5.0)),
        container_image=doc.get("container_image", "python:3.11-slim"),
    )


def config_from_doc(doc: dict) -> RunConfig:
    """Build a RunConfig from a parsed YAML document."""
    doc = doc or {}
    run_doc = doc.get("run", {})
    return RunConfig(
        model_overrides=doc.get("models", {}) or {},
        providers=doc.get("providers", {}) or {},
        caps=_caps_from_doc(doc.get("caps", {}) or {}),
        sandbox=_sandbox_from_doc(doc.get("sandbox", {}) or {}),
        parallelism=int(run_doc.get("parallelism", DEFAULT_PARALLELISM)),
        rounds=int(run_doc.get("rounds", DEFAULT_ROUNDS)),
        artifact_root=run_doc.get("artifact_root", "artifacts"),
        work_root=run_doc.get("work_root", ".cveforge"),
        fixed_flag_token=run_doc.get("fixed_flag_token"),
        repo_url=run_doc.get("repo_url", ""),
        interpreter=run_doc.get("interpreter", "python3"),
        kb_token_budget=int(run_doc.get("kb_token_budget", DEFAULT_KB_TOKEN_BUDGET)),
        critic_context_tokens=int(
            run_doc.get("critic_context_tokens", DEFAULT_CRITIC_CONTEXT_TOKENS)
        ),
        transport_retry_delay_s=float(run_doc.get("transport_retry_delay_s", 0.5)),
        registry_url=run_doc.get("registry_url", ""),
    )


def _merge_docs(base: dict, overlay: dict) -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge_docs(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    config_path: str | Path | None = None,
    *,
    mock_dir: str | Path | None = None,
) -> RunConfig:
    """Layered load: defaults < mock-dir config.yaml < explicit config file."""
    import yaml

    doc: dict = {}
    if mock_dir is not None:
        mock_config = Path(mock_dir) / "config.yaml"
        if mock_config.is_file():
            doc = _merge_docs(
                doc, yaml.safe_load(mock_config.read_text(encoding="utf-8")) or {}
            )
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        doc = _merge_docs(doc, yaml.safe_load(path.read_text(encoding="utf-8")) or {})
    config = config_from_doc(doc)
    if mock_dir is not None:
        config = config.replace(mock_dir=str(mock_dir))
    return config
