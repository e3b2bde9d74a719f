"""Shared fixtures: golden replay directory, scripted gateways, sandboxes."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from cveforge.config import RunConfig, load_config
from cveforge.gateway.backends import ScriptedBackend
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.ledger import UsageLedger
from cveforge.gateway.roles import load_role_bindings
from cveforge.ingest.advisories import FixtureAdvisoryFetcher
from cveforge.ingest.registry import FixtureRegistry
from cveforge.ingest.repos import LocalRepoFixture
from cveforge.pipeline.orchestrator import PipelineServices
from cveforge.sandbox.base import SandboxConfig
from cveforge.sandbox.local import LocalSandboxBackend

GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"
GOLDEN_CVE = "CVE-2024-4340"
GOLDEN_FLAG = "3xploit66full"

# One line per acceptance criterion, echoed after the run regardless of
# output capturing (see pytest_terminal_summary below).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture
def golden_config(tmp_path) -> RunConfig:
    """The golden fixture's config with roots isolated per test."""
    config = load_config(mock_dir=GOLDEN_DIR)
    return config.replace(
        artifact_root=str(tmp_path / "artifacts"),
        work_root=str(tmp_path / "work"),
    )


def load_golden_scripts() -> dict[str, list[dict]]:
    scripts = {}
    for path in sorted((GOLDEN_DIR / "scripts").glob("*.json")):
        scripts[path.stem] = json.loads(path.read_text(encoding="utf-8"))
    return scripts


def golden_services(
    scripts: dict[str, list[dict]] | None = None,
    *,
    work_root: str | Path,
    delay_s: float = 0.0,
    sandbox_config: SandboxConfig | None = None,
) -> tuple[PipelineServices, ScriptedBackend]:
    """Fixture-backed services with a controllable scripted backend.

    Returns the backend too so tests can assert call counts.
    """
    backend = ScriptedBackend(
        scripts if scripts is not None else load_golden_scripts(), delay_s=delay_s
    )
    services = PipelineServices(
        registry=FixtureRegistry(GOLDEN_DIR / "registry"),
        repo_backend_factory=lambda record: LocalRepoFixture(GOLDEN_DIR / "repo"),
        advisory_fetcher=FixtureAdvisoryFetcher.from_file(GOLDEN_DIR / "advisories.json"),
        chat_backend_factory=lambda: backend,
        sandbox_backend=LocalSandboxBackend(
            Path(work_root) / "sandboxes", sandbox_config or SandboxConfig()
        ),
    )
    return services, backend


@pytest.fixture
def sandbox_backend(tmp_path) -> LocalSandboxBackend:
    return LocalSandboxBackend(tmp_path / "sbx", SandboxConfig())


@pytest.fixture
def sandbox(sandbox_backend):
    handle = sandbox_backend.create()
    yield handle
    handle.close()


def make_gateway(
    scripts: dict[str, list[dict]],
    *,
    budget_usd: float = 5.0,
    pricing: dict | None = None,
    retry_delay_s: float = 0.0,
) -> tuple[Gateway, ScriptedBackend, UsageLedger]:
    """Gateway over a scripted backend with optional synthetic pricing."""
    overrides = {}
    for role, (prompt_price, completion_price) in (pricing or {}).items():
        overrides[role] = {
            "model": "scripted",
            "prompt_price": prompt_price,
            "completion_price": completion_price,
            "provider": "mock",
        }
    backend = ScriptedBackend(scripts)
    ledger = UsageLedger()
    gateway = Gateway(
        load_role_bindings(overrides),
        backend,
        ledger,
        budget_usd,
        retry_base_delay_s=retry_delay_s,
    )
    return gateway, backend, ledger


def final_turn(payload: dict, usage: dict | None = None) -> dict:
    """A scripted final-answer turn."""
    turn: dict = {"content": json.dumps(payload)}
    if usage:
        turn["usage"] = usage
    return turn


def tool_turn(tool_name: str, usage: dict | None = None, **arguments) -> dict:
    turn: dict = {"tool_calls": [{"tool_name": tool_name, "arguments": arguments}]}
    if usage:
        turn["usage"] = usage
    return turn


# --- golden-content helpers for stage-level tests -----------------------------

def golden_exploit_script() -> str:
    """The PoC text the golden exploit developer writes to exploit.py."""
    for turn in load_golden_scripts()["exploit_developer"]:
        for call in turn.get("tool_calls", []):
            if call["tool_name"] == "write_to_file":
                return call["arguments"]["content"]
    raise AssertionError("golden exploit script not found in fixtures")


def golden_verifier_scripts() -> tuple[str, str]:
    """(weak, robust) verifier script texts from the golden fixture."""
    texts = []
    for turn in load_golden_scripts()["verifier_developer"]:
        if not turn.get("tool_calls") and turn.get("content"):
            texts.append(json.loads(turn["content"])["script_text"])
    assert len(texts) == 2
    return texts[0], texts[1]


def make_golden_kb():
    from cveforge.stages.knowledge import KnowledgeBase

    answer = json.loads(load_golden_scripts()["knowledge_builder"][0]["content"])
    return KnowledgeBase(
        cve_id=GOLDEN_CVE,
        summary=answer["summary"],
        cwe_list=tuple(answer["cwe_list"]),
        affected_summary=answer["affected_summary"],
        root_cause=answer["root_cause"],
        poc_provenance=answer["poc_provenance"],
        poc_details=answer["poc_details"],
        patch_digest=answer["patch_digest"],
        advisory_digest=answer["advisory_digest"],
    )


def make_golden_exploit_report():
    from cveforge.stages.exploiter import ExploitReport

    answer = json.loads(load_golden_scripts()["exploit_developer"][-1]["content"])
    return ExploitReport(
        success=answer["success"],
        exploit_overview=answer["exploit_overview"],
        poc_script=answer["poc_script"],
        example_input=answer["example_input"],
        demonstrated_evidence=answer["demonstrated_evidence"],
    )


def exploit_ready_sandbox(tmp_path, *, version: str = "0.4.4"):
    """A sandbox holding the vulnerable tree, PYTHONPATH, and the PoC."""
    backend = LocalSandboxBackend(
        tmp_path / "sbx", SandboxConfig(foreground_timeout_s=30.0)
    )
    handle = backend.create(source_dir=GOLDEN_DIR / "repo" / "tags" / version)
    handle.env_store.set("PYTHONPATH", ".")
    (handle.workdir / "exploit.py").write_text(golden_exploit_script())
    return handle
