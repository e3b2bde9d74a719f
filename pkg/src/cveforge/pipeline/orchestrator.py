"""Single-CVE reproduction: wire services from configuration and drive
the stages in order under the budget/deadline guard."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from cveforge.agents.spec import AgentTranscript, OUTCOME_BUDGET
from cveforge.config import RunConfig
from cveforge.errors import (
    BudgetExceeded,
    DeadlineExceeded,
    FormatError,
    IngestError,
    StageFailure,
    StorageFailed,
)
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.ledger import UsageLedger
from cveforge.ingest.advisories import (
    FixtureAdvisoryFetcher,
    HttpAdvisoryFetcher,
    collect_advisories,
)
from cveforge.ingest.bundle import assemble_raw_bundle, write_bundle_layout
from cveforge.ingest.records import CveRecord
from cveforge.ingest.registry import CvelistRegistry, FixtureRegistry, fetch_cve_record
from cveforge.ingest.repos import (
    GitCloneBackend,
    GitHubRepoBackend,
    LocalRepoFixture,
    collect_patch_commits,
    download_source,
)
from cveforge.ingest.versions import resolve_vulnerable_version
from cveforge.pipeline.state import CapGuard, PipelineState, failure_bucket
from cveforge.sandbox.base import SandboxConfig
from cveforge.sandbox.container import ContainerSandboxBackend
from cveforge.sandbox.local import LocalSandboxBackend
from cveforge.stages.builder import plan_prerequisites, run_setup
from cveforge.stages.exploiter import develop_exploit
from cveforge.stages.knowledge import build_knowledge_base
from cveforge.stages.verifier import (
    generate_flag_token,
    run_verifier_stage,
    store_reproduced,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineServices:
    """The pluggable backends one reproduction attempt runs against."""

    registry: object
    repo_backend_factory: Callable[[CveRecord], object]
    advisory_fetcher: object
    chat_backend_factory: Callable[[], object]
    sandbox_backend: object


class _EmptyAdvisoryFetcher:
    def fetch(self, url: str) -> str:
        raise KeyError(f"no advisory content available for {url}")


def _mock_scripts_dir(mock_root: Path, cve_id: str, round_index: int) -> Path:
    """Most specific script directory wins: per-round, per-CVE, shared."""
    candidates = [
        mock_root / cve_id / f"round_{round_index}",
        mock_root / cve_id,
        mock_root,
    ]
    for candidate in candidates:
        if (candidate / "scripts").is_dir():
            return candidate
    raise FileNotFoundError(
        f"no scripts/ directory for {cve_id} (round {round_index}) under {mock_root}"
    )


def build_services(
    config: RunConfig, cve_id: str, round_index: int = 1
) -> PipelineServices:
    """Default service wiring: fixture-backed in mock mode, live otherwise."""
    sandbox_config = SandboxConfig(
        foreground_timeout_s=config.sandbox.foreground_timeout_s,
        background_sample_s=config.sandbox.background_sample_s,
    )
    sandbox_root = Path(config.work_root) / "sandboxes"
    if config.sandbox.backend == "container":
        sandbox_backend = ContainerSandboxBackend(
            sandbox_root, sandbox_config, image=config.sandbox.container_image
        )
    else:
        sandbox_backend = LocalSandboxBackend(sandbox_root, sandbox_config)

    if config.mock_mode:
        mock_root = Path(config.mock_dir)
        scripts_dir = _mock_scripts_dir(mock_root, cve_id, round_index)

        def chat_backend_factory():
            from cveforge.gateway.backends import ScriptedBackend

            return ScriptedBackend.from_dir(scripts_dir)

        registry = FixtureRegistry(_first_existing(mock_root, cve_id, "registry"))
        repo_root = _first_existing(mock_root, cve_id, "repo")

        def repo_backend_factory(record: CveRecord):
            return LocalRepoFixture(repo_root)

        advisories_file = _first_existing_file(mock_root, cve_id, "advisories.json")
        advisory_fetcher = (
            FixtureAdvisoryFetcher.from_file(advisories_file)
            if advisories_file
            else _EmptyAdvisoryFetcher()
        )
        return PipelineServices(
            registry=registry,
            repo_backend_factory=repo_backend_factory,
            advisory_fetcher=advisory_fetcher,
            chat_backend_factory=chat_backend_factory,
            sandbox_backend=sandbox_backend,
        )

    def live_chat_backend_factory():
        from cveforge.gateway.backends import OpenAiChatBackend

        return OpenAiChatBackend(providers=config.providers)

    def live_repo_backend_factory(record: CveRecord):
        if "github.com" in record.repository:
            return GitHubRepoBackend(record.repository)
        return GitCloneBackend(record.repository)

    return PipelineServices(
        registry=CvelistRegistry(config.registry_url or CvelistRegistry.DEFAULT_BASE),
        repo_backend_factory=live_repo_backend_factory,
        advisory_fetcher=HttpAdvisoryFetcher(),
        chat_backend_factory=live_chat_backend_factory,
        sandbox_backend=sandbox_backend,
    )


def _first_existing(mock_root: Path, cve_id: str, name: str) -> Path:
    per_cve = mock_root / cve_id / name
    return per_cve if per_cve.is_dir() else mock_root / name


def _first_existing_file(mock_root: Path, cve_id: str, name: str) -> Path | None:
    for candidate in (mock_root / cve_id / name, mock_root / name):
        if candidate.is_file():
            return candidate
    return None


class TranscriptSink:
    """Persists each agent transcript as it completes, in run order."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.counter = 0

    def __call__(self, transcript: AgentTranscript) -> None:
        self.counter += 1
        transcript.save(self.directory / f"{self.counter:03d}_{transcript.agent}.jsonl")


def allocate_run_dir(artifact_root: str | Path, cve_id: str) -> tuple[Path, int]:
    """Next free versioned run directory: re-storing never overwrites."""
    base = Path(artifact_root) / cve_id
    base.mkdir(parents=True, exist_ok=True)
    index = 1
    while (base / f"run_{index:03d}").exists():
        index += 1
    run_dir = base / f"run_{index:03d}"
    run_dir.mkdir()
    return run_dir, index


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def reproduce(
    cve_id: str,
    config: RunConfig,
    *,
    services: PipelineServices | None = None,
    round_index: int = 1,
) -> PipelineState:
    """Run the full pipeline for one CVE inside one sandbox.

    Nothing is thrown: every outcome (reproduced, failed(stage, reason),
    aborted(budget|time)) is encoded in the returned state. Budget and
    deadline are checked before every gateway call and tool dispatch.
    """
    services = services or build_services(config, cve_id, round_index)
    ledger = UsageLedger()
    state = PipelineState(cve_id=cve_id, ledger=ledger)
    started_monotonic = time.monotonic()

    run_dir, run_index = allocate_run_dir(config.artifact_root, cve_id)
    state.run_dir = str(run_dir)
    state.run_index = run_index
    sink = TranscriptSink(run_dir / "transcripts")

    backend = services.chat_backend_factory()
    gateway = Gateway(
        config.role_bindings(),
        backend,
        ledger,
        config.caps.budget_usd,
        retry_base_delay_s=config.transport_retry_delay_s,
    )
    guard = CapGuard(
        ledger,
        config.caps.budget_usd,
        started_monotonic + config.caps.deadline_seconds,
    )
    flag_token = config.fixed_flag_token or generate_flag_token()
    if hasattr(backend, "substitutions"):
        backend.substitutions.setdefault("FLAG_TOKEN", flag_token)

    sandbox = None
    try:
        # Ingest: gather the bundle, then mount the source in a sandbox.
        record = fetch_cve_record(services.registry, cve_id, repo_override=config.repo_url)
        repo_backend = services.repo_backend_factory(record)
        version = resolve_vulnerable_version(record, repo_backend.list_tags())
        work_dir = Path(config.work_root) / cve_id / f"run_{run_index:03d}"
        source = download_source(
            record, version, work_dir / "bundle" / "source", repo_backend
        )
        advisories = collect_advisories(record, services.advisory_fetcher)
        patches = collect_patch_commits(record, repo_backend)
        bundle = assemble_raw_bundle(record, source, patches, advisories)
        write_bundle_layout(bundle, work_dir)
        sandbox = services.sandbox_backend.create(
            source_dir=work_dir / "bundle" / "source"
        )

        state.advance("knowledge")
        kb, _ = build_knowledge_base(
            bundle,
            gateway,
            token_budget=config.kb_token_budget,
            guard=guard,
            on_transcript=sink,
        )
        kb.save(run_dir / "kb.json")

        state.advance("builder")
        plan, _ = plan_prerequisites(
            kb,
            sandbox,
            gateway,
            max_tool_calls=config.caps.tool_calls,
            guard=guard,
            on_transcript=sink,
        )
        _write_json(run_dir / "builder" / "plan.json", _plan_record(plan))
        setup_report, setup_cycle = run_setup(
            kb,
            plan,
            sandbox,
            gateway,
            max_feedback=config.caps.feedback.builder,
            max_tool_calls=config.caps.tool_calls,
            critic_context_tokens=config.critic_context_tokens,
            guard=guard,
            on_transcript=sink,
        )
        _write_json(run_dir / "builder" / "setup.json", _cycle_record(setup_report, setup_cycle))
        if not setup_cycle.accepted or setup_report is None or not setup_report.success:
            raise StageFailure(
                "builder",
                setup_cycle.failure_reason or "critic_rejected",
                setup_cycle.verdict.feedback if setup_cycle.verdict else "",
            )

        state.advance("exploiter")
        exploit, exploit_cycle = develop_exploit(
            kb,
            setup_report,
            sandbox,
            gateway,
            exploit_filename=config.exploit_filename,
            max_feedback=config.caps.feedback.exploiter,
            max_tool_calls=config.caps.tool_calls,
            critic_context_tokens=config.critic_context_tokens,
            guard=guard,
            on_transcript=sink,
        )
        _write_json(run_dir / "exploiter" / "exploit.json", _cycle_record(exploit, exploit_cycle))
        if not exploit_cycle.accepted or exploit is None or not exploit.success:
            raise StageFailure(
                "exploiter",
                exploit_cycle.failure_reason or "critic_rejected",
                exploit_cycle.verdict.feedback if exploit_cycle.verdict else "",
            )

        state.advance("verifier")
        sandbox.set_network_policy("restricted")
        verifier_result = run_verifier_stage(
            kb,
            exploit,
            flag_token,
            sandbox,
            gateway,
            exploit_filename=config.exploit_filename,
            interpreter=config.interpreter,
            max_flag_checks=config.caps.feedback.verifier_flag_checks,
            max_critic_rejections=config.caps.feedback.verifier_critics,
            max_tool_calls=config.caps.tool_calls,
            critic_context_tokens=config.critic_context_tokens,
            guard=guard,
            on_transcript=sink,
        )
        _write_json(run_dir / "verifier_stage" / "events.json", verifier_result.events)
        if not verifier_result.accepted:
            raise StageFailure(
                "verifier", verifier_result.failure_reason or "critic_rejected"
            )

        artifact = store_reproduced(
            cve_id,
            sandbox,
            exploit,
            verifier_result.verifier,
            kb,
            ledger,
            run_dir,
            exploit_filename=config.exploit_filename,
            run_index=run_index,
            wall_time_s=time.monotonic() - started_monotonic,
        )
        state.advance("stored")
        state.mark_reproduced(artifact)
    except IngestError as exc:
        logger.info("%s: ingest failed: %s", cve_id, exc)
        state.mark_failed("ingest", "ingest_error", str(exc))
    except FormatError as exc:
        state.mark_failed(state.stage, "format_error", str(exc))
    except StageFailure as exc:
        if exc.reason == OUTCOME_BUDGET:
            state.mark_aborted("budget")
        else:
            state.mark_failed(exc.stage, failure_bucket(exc.stage, exc.reason), str(exc))
    except BudgetExceeded:
        state.mark_aborted("budget")
    except DeadlineExceeded:
        state.mark_aborted("time")
    except StorageFailed as exc:
        state.mark_failed("verifier", "build_failure", f"storage failed: {exc}")
    finally:
        if sandbox is not None:
            sandbox.close()
        _write_json(run_dir / "run_record.json", _state_meta(state))
    return state


def _state_meta(state: PipelineState) -> dict:
    return {
        "cve_id": state.cve_id,
        "status": state.status_text,
        "stage": state.stage,
        "reason": state.reason_bucket,
        "detail": state.failure_detail,
        "cost_usd": state.ledger.total_cost_usd,
        "seconds": state.elapsed_s(),
        "run_index": state.run_index,
        "trace": [list(step) for step in state.trace],
    }


def _plan_record(plan) -> dict:
    return {
        "overview": plan.overview,
        "important_files": [
            {"path": f.path, "note": f.note, "exists": f.exists}
            for f in plan.important_files
        ],
        "required_services": plan.required_services,
        "expected_state": plan.expected_state,
    }


def _cycle_record(report, cycle) -> dict:
    from dataclasses import asdict, is_dataclass

    return {
        "report": asdict(report) if is_dataclass(report) else report,
        "accepted": cycle.accepted,
        "failure_reason": cycle.failure_reason,
        "verdicts": [
            {"analysis": v.analysis, "accepted": v.accepted, "feedback": v.feedback}
            for v in ([cycle.verdict] if cycle.verdict else [])
        ],
    }
