"""Pipeline driver: stage order, caps, abort semantics, determinism."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from cveforge.pipeline.orchestrator import reproduce
from tests.conftest import (
    GOLDEN_CVE,
    GOLDEN_FLAG,
    final_turn,
    golden_services,
    load_golden_scripts,
)

EXPECTED_STAGE_ORDER = ["ingest", "knowledge", "builder", "exploiter", "verifier", "stored"]


def _run_golden(golden_config, tmp_path, scripts=None, delay_s=0.0, config_tweak=None):
    config = golden_config
    if config_tweak:
        config = config_tweak(config)
    services, backend = golden_services(
        scripts, work_root=tmp_path / "work", delay_s=delay_s
    )
    state = reproduce(GOLDEN_CVE, config, services=services)
    return state, backend


def test_golden_run_reproduces_with_ordered_stages(golden_config, tmp_path):
    state, backend = _run_golden(golden_config, tmp_path)
    assert state.status == "reproduced"
    stages = []
    for stage, _ in state.trace:
        if stage not in stages:
            stages.append(stage)
    assert stages == EXPECTED_STAGE_ORDER
    assert state.artifact is not None and state.artifact.validate() == []
    # every scripted turn was consumed exactly once
    assert all(backend.remaining(role) == 0 for role in load_golden_scripts())


def test_budget_abort_before_sixth_call(golden_config, tmp_path):
    # Synthetic pricing: every call costs $0.90, so call 6 would cross $5.
    overrides = {
        role: {"model": "m", "prompt_price": 1.0, "completion_price": 0.0, "provider": "mock"}
        for role in golden_config.role_bindings()
    }
    config = golden_config.replace(model_overrides=overrides)
    state, backend = _run_golden(config, tmp_path, config_tweak=None)
    assert state.status_text == "aborted(budget)"
    assert backend.call_count == 5
    assert "exploit_developer" not in backend.calls_by_role
    assert state.reason_bucket == "budget"
    assert state.ledger.total_cost_usd <= 5.0


def test_deadline_abort_with_slow_mock(golden_config, tmp_path):
    import dataclasses

    config = golden_config.replace(
        caps=dataclasses.replace(golden_config.caps, deadline_minutes=1.0 / 60.0)
    )
    state, _ = _run_golden(config, tmp_path, delay_s=0.5)
    assert state.status_text == "aborted(time)"
    assert state.reason_bucket == "timeout"


def test_builder_double_rejection_fails_pipeline(golden_config, tmp_path):
    scripts = load_golden_scripts()
    reject = final_turn(
        {"analysis": "mock-up substitute project", "accepted": False,
         "feedback": "set up the real project"}
    )
    scripts["setup_critic"] = [reject, reject]
    scripts["setup_developer"] = scripts["setup_developer"] * 2  # revision rerun
    state, backend = _run_golden(golden_config, tmp_path, scripts=scripts)
    assert state.status_text == "failed(builder, critic_rejected)"
    # the pipeline stopped at the builder gate: no exploiter calls at all
    assert "exploit_developer" not in backend.calls_by_role
    stages = [stage for stage, _ in state.trace]
    assert "exploiter" not in stages and "verifier" not in stages


def test_exploiter_failure_never_enters_verifier(golden_config, tmp_path):
    scripts = load_golden_scripts()
    failure = final_turn(
        {"success": False, "exploit_overview": "no trigger", "poc_script": "",
         "example_input": "", "demonstrated_evidence": ""}
    )
    reject = final_turn(
        {"analysis": "not demonstrated", "accepted": False, "feedback": "run it"}
    )
    scripts["exploit_developer"] = [failure, failure]
    scripts["exploit_critic"] = [reject, reject]
    state, backend = _run_golden(golden_config, tmp_path, scripts=scripts)
    assert state.status == "failed"
    assert state.failure_stage == "exploiter"
    assert "verifier_developer" not in backend.calls_by_role
    assert "verifier" not in [stage for stage, _ in state.trace]


def test_state_trace_deterministic_across_replays(golden_config, tmp_path):
    first, _ = _run_golden(golden_config, tmp_path)
    second, _ = _run_golden(golden_config, tmp_path)
    assert first.trace == second.trace
    assert first.status == second.status == "reproduced"
    assert first.ledger.total_cost_usd == pytest.approx(second.ledger.total_cost_usd)


def test_metadata_cost_equals_ledger_sum(golden_config, tmp_path):
    state, _ = _run_golden(golden_config, tmp_path)
    metadata = json.loads(
        (Path(state.run_dir) / "metadata.json").read_text(encoding="utf-8")
    )
    assert abs(metadata["cost_usd"] - state.ledger.total_cost_usd) < 1e-9


def test_flag_token_absent_from_all_pre_verifier_prompts(golden_config, tmp_path):
    state, _ = _run_golden(golden_config, tmp_path)
    transcripts = sorted((Path(state.run_dir) / "transcripts").glob("*.jsonl"))
    assert transcripts
    seen_verifier = False
    for path in transcripts:
        body = path.read_text(encoding="utf-8")
        if "verifier_developer" in path.name:
            seen_verifier = True
        if not seen_verifier:
            assert GOLDEN_FLAG not in body, f"flag leaked into {path.name}"
    assert seen_verifier


def test_repeat_runs_allocate_versioned_directories(golden_config, tmp_path):
    first, _ = _run_golden(golden_config, tmp_path)
    second, _ = _run_golden(golden_config, tmp_path)
    assert first.run_dir.endswith("run_001")
    assert second.run_dir.endswith("run_002")
    assert Path(first.run_dir).is_dir() and Path(second.run_dir).is_dir()


def test_failed_runs_still_persist_transcripts_and_record(golden_config, tmp_path):
    scripts = load_golden_scripts()
    scripts["knowledge_builder"] = [{"content": "not json"}]
    scripts["format_corrector"] = [{"content": "no"}] * 3
    state, _ = _run_golden(golden_config, tmp_path, scripts=scripts)
    assert state.status == "failed"
    assert state.failure_reason == "format_error"
    run_dir = Path(state.run_dir)
    assert (run_dir / "run_record.json").is_file()
    assert list((run_dir / "transcripts").glob("*_knowledge_builder.jsonl"))


def test_unknown_cve_is_ingest_error(golden_config, tmp_path):
    services, _ = golden_services(work_root=tmp_path / "work")
    state = reproduce("CVE-0000-0000", golden_config, services=services)
    assert state.status_text == "failed(ingest, ingest_error)"
    assert state.stage == "ingest"
