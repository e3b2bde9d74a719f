"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines print even under
capture). Criterion 8 is the optional live smoke test and only runs when
CVEFORGE_LIVE_SMOKE=1 and provider keys are present.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import pytest

from cveforge.agents.runner import run_agent
from cveforge.agents.spec import OUTCOME_CAP, AgentSpec
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.ingest.registry import FixtureRegistry, fetch_cve_record
from cveforge.ingest.repos import LocalRepoFixture
from cveforge.ingest.versions import resolve_vulnerable_version
from cveforge.pipeline.orchestrator import reproduce
from cveforge.sandbox.tools import FULL_TOOLSET
from cveforge.stages.verifier import VerifierScript, check_flag, run_verifier_stage
from tests.conftest import (
    GOLDEN_CVE,
    GOLDEN_DIR,
    GOLDEN_FLAG,
    exploit_ready_sandbox,
    final_turn,
    golden_services,
    load_golden_scripts,
    make_gateway,
    make_golden_exploit_report,
    make_golden_kb,
    tool_turn,
)

_TESTS_DIR = Path(__file__).parent


def _report(criterion: int, ok: bool, detail: str) -> None:
    from tests import conftest

    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def _pytest_green(*paths: str) -> bool:
    result = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", *paths],
        cwd=_TESTS_DIR.parent,
        capture_output=True,
        text=True,
    )
    if result.returncode != 0:
        print(result.stdout[-2000:], file=sys.__stdout__)
    return result.returncode == 0


def _run_golden(tmp_path, suffix="a"):
    from cveforge.config import load_config

    config = load_config(mock_dir=GOLDEN_DIR).replace(
        artifact_root=str(tmp_path / f"artifacts_{suffix}"),
        work_root=str(tmp_path / f"work_{suffix}"),
    )
    services, backend = golden_services(work_root=tmp_path / f"work_{suffix}")
    return reproduce(GOLDEN_CVE, config, services=services), backend


def test_criterion_1_golden_path_replay(tmp_path):
    started = time.monotonic()
    state, _ = _run_golden(tmp_path, "a")
    elapsed = time.monotonic() - started

    run_dir = Path(state.run_dir)
    checks = {
        "status reproduced": state.status == "reproduced",
        "stage order": [s for s, _ in state.trace if s]
        and _stage_order(state) == ["ingest", "knowledge", "builder", "exploiter", "verifier", "stored"],
        "kb stored": (run_dir / "kb.json").is_file(),
        "exploit stored": (run_dir / "exploit").is_file(),
        "verifier stored": (run_dir / "verifier").is_file(),
        "metadata stored": (run_dir / "metadata.json").is_file(),
        "transcripts stored": bool(list((run_dir / "transcripts").glob("*.jsonl"))),
        "under two minutes": elapsed < 120.0,
    }

    transcripts = "\n".join(
        p.read_text(encoding="utf-8")
        for p in sorted((run_dir / "transcripts").glob("*.jsonl"))
    )
    checks["advisory PoC extracted"] = '\\"poc_provenance\\": \\"extracted\\"' in transcripts.replace(
        '\\"', '\\"'
    ) or '"poc_provenance": "extracted"' in transcripts.replace('\\"', '"')
    checks["pip install encoded"] = "pip install sqlparse==0.4.4" in transcripts
    checks["payload encoded"] = '"[" * depth + "]" * depth' in transcripts.replace(
        '\\"', '"'
    )
    checks["recursion evidence"] = "RecursionError" in transcripts
    checks["flag literal"] = GOLDEN_FLAG in (run_dir / "verifier").read_text()

    events = json.loads((run_dir / "verifier_stage" / "events.json").read_text())
    critiques = [e for e in events if e["kind"] == "critique"]
    checks["weak->robust with one rejection"] = [c["accepted"] for c in critiques] == [
        False,
        True,
    ]

    # determinism: a second replay walks the identical state trace
    state_b, _ = _run_golden(tmp_path, "b")
    checks["deterministic replay"] = (
        state_b.trace == state.trace
        and state_b.ledger.total_cost_usd == state.ledger.total_cost_usd
    )

    failed = [name for name, ok in checks.items() if not ok]
    _report(
        1,
        not failed,
        "golden-path replay (CVE-2024-4340 scripted run)"
        + (f"; failed: {failed}" if failed else f"; {elapsed:.1f}s"),
    )


def _stage_order(state):
    seen = []
    for stage, _ in state.trace:
        if stage not in seen:
            seen.append(stage)
    return seen


def test_criterion_2_tool_contract_suite():
    ok = _pytest_green("tests/test_sandbox.py")
    _report(2, ok, "tool contracts: pagination/timeout/payload/background/env properties")


def test_criterion_3_cap_enforcement(tmp_path, sandbox):
    # 61st tool call rejected, run terminates cap_exhausted at 60 executed.
    schema = OutputSchema("r", (field_spec("success", "bool"),))
    spec = AgentSpec(
        role_name="setup_developer", system_prompt="x", toolset=FULL_TOOLSET,
        final_answer_schema=schema, max_tool_calls=60,
    )
    turns = [tool_turn("execute_ls_command", directory=".") for _ in range(61)]
    gateway, _, _ = make_gateway({"setup_developer": turns})
    transcript, _ = run_agent(spec, ["ctx"], sandbox, gateway)
    cap_ok = transcript.outcome == OUTCOME_CAP and transcript.tool_calls_made == 60

    # Builder/exploiter feedback <= 1: probing scripts with an extra
    # developer answer observe zero extra runs.
    scripts = load_golden_scripts()
    reject = final_turn({"analysis": "bad", "accepted": False, "feedback": "redo"})
    scripts["setup_critic"] = [reject, reject, reject]
    scripts["setup_developer"] = scripts["setup_developer"] * 3
    services, backend = golden_services(scripts, work_root=tmp_path / "w1")
    from cveforge.config import load_config

    config = load_config(mock_dir=GOLDEN_DIR).replace(
        artifact_root=str(tmp_path / "a1"), work_root=str(tmp_path / "w1")
    )
    state = reproduce(GOLDEN_CVE, config, services=services)
    builder_ok = (
        state.status_text == "failed(builder, critic_rejected)"
        and backend.calls_by_role["setup_developer"] == 8  # 2 runs x 4 turns
        and backend.calls_by_role["setup_critic"] == 2
    )

    # Verifier loops: both budgets stop at 5 with a sixth script queued.
    box = exploit_ready_sandbox(tmp_path / "flag")
    bad = (
        "# [verifier:pre-setup]\nFLAG = \"WrongFlag1234567\"\n"
        "# [verifier:exploit-execution]\n# never runs exploit.py\n"
        "# [verifier:post-setup]\nprint(\"nope\")\n"
    )
    gateway2, backend2, _ = make_gateway(
        {"verifier_developer": [final_turn({"script_text": bad})] * 6}
    )
    flag_result = run_verifier_stage(
        make_golden_kb(), make_golden_exploit_report(), "WrongFlag1234567", box, gateway2
    )
    flag_ok = (
        flag_result.failure_reason == "flag_check_exhausted"
        and len(flag_result.outcomes) == 5
        and backend2.remaining("verifier_developer") == 1
    )

    box2 = exploit_ready_sandbox(tmp_path / "critic")
    unconditional = (
        f"# [verifier:pre-setup]\nFLAG = \"{GOLDEN_FLAG}\"\n"
        "# [verifier:exploit-execution]\n# cites exploit.py without running it\n"
        "# [verifier:post-setup]\nprint(FLAG)\n"
    )
    reject_v = final_turn({"analysis": "spoofable", "accepted": False, "feedback": "harden"})
    gateway3, backend3, _ = make_gateway(
        {
            "verifier_developer": [final_turn({"script_text": unconditional})] * 6,
            "verifier_critic": [reject_v] * 6,
        }
    )
    critic_result = run_verifier_stage(
        make_golden_kb(), make_golden_exploit_report(), GOLDEN_FLAG, box2, gateway3
    )
    critic_ok = (
        critic_result.failure_reason == "critic_rejected"
        and len(critic_result.verdicts) == 5
        and backend3.remaining("verifier_critic") == 1
    )

    failed = [
        name
        for name, ok in {
            "61st call rejected at 60": cap_ok,
            "builder feedback <= 1": builder_ok,
            "flag-check loop <= 5": flag_ok,
            "verifier-critic loop <= 5": critic_ok,
        }.items()
        if not ok
    ]
    _report(3, not failed, "cap enforcement" + (f"; failed: {failed}" if failed else ""))


def test_criterion_4_budget_and_deadline(tmp_path):
    from cveforge.config import load_config

    base = load_config(mock_dir=GOLDEN_DIR)

    # Synthetic pricing: each call costs $0.90, so the 6th would pass $5.
    overrides = {
        role: {"model": "m", "prompt_price": 1.0, "completion_price": 0.0, "provider": "mock"}
        for role in base.role_bindings()
    }
    config = base.replace(
        model_overrides=overrides,
        artifact_root=str(tmp_path / "a"),
        work_root=str(tmp_path / "w"),
    )
    services, backend = golden_services(work_root=tmp_path / "w")
    state = reproduce(GOLDEN_CVE, config, services=services)
    budget_ok = state.status_text == "aborted(budget)" and backend.call_count == 5

    # Deadline 1s with a slow mock.
    import dataclasses

    slow_config = base.replace(
        caps=dataclasses.replace(base.caps, deadline_minutes=1.0 / 60.0),
        artifact_root=str(tmp_path / "a2"),
        work_root=str(tmp_path / "w2"),
    )
    services2, _ = golden_services(work_root=tmp_path / "w2", delay_s=0.5)
    state2 = reproduce(GOLDEN_CVE, slow_config, services=services2)
    deadline_ok = state2.status_text == "aborted(time)"

    # Metadata cost identity on a stored run.
    config3 = base.replace(
        artifact_root=str(tmp_path / "a3"), work_root=str(tmp_path / "w3")
    )
    services3, _ = golden_services(work_root=tmp_path / "w3")
    state3 = reproduce(GOLDEN_CVE, config3, services=services3)
    metadata = json.loads((Path(state3.run_dir) / "metadata.json").read_text())
    cost_ok = abs(metadata["cost_usd"] - state3.ledger.total_cost_usd) < 1e-9

    failed = [
        name
        for name, ok in {
            "abort before 6th call (5 recorded)": budget_ok,
            "aborted(time) at 1s deadline": deadline_ok,
            "metadata cost == ledger sum": cost_ok,
        }.items()
        if not ok
    ]
    _report(4, not failed, "budget and deadline caps" + (f"; failed: {failed}" if failed else ""))


def test_criterion_5_permission_and_integrity(tmp_path):
    import hashlib

    # Read-only planner and verifier developer attempting write/execute.
    def tree_digest(root: Path) -> str:
        digest = hashlib.sha256()
        for path in sorted(root.rglob("*")):
            rel = path.relative_to(root)
            if rel.parts and rel.parts[0] == ".logs":
                continue
            digest.update(str(rel).encode())
            if path.is_file():
                digest.update(path.read_bytes())
        return digest.hexdigest()

    from cveforge.sandbox.base import SandboxConfig
    from cveforge.sandbox.local import LocalSandboxBackend
    from cveforge.sandbox.tools import READ_ONLY_TOOLSET

    backend = LocalSandboxBackend(tmp_path / "sbx", SandboxConfig())
    box = backend.create(source_dir=GOLDEN_DIR / "repo" / "tags" / "0.4.4")
    before = tree_digest(box.workdir)
    schema = OutputSchema("r", (field_spec("overview", "str"),))
    read_only_ok = True
    for role in ("prereq_developer", "verifier_developer"):
        spec = AgentSpec(
            role_name=role, system_prompt="x", toolset=READ_ONLY_TOOLSET,
            final_answer_schema=schema, read_only=True,
        )
        gateway, _, _ = make_gateway(
            {role: [
                tool_turn("write_to_file", path="evil.txt", content="x"),
                tool_turn("execute_linux_command", command="rm -rf sqlparse"),
                final_turn({"overview": "tried and was refused"}),
            ]}
        )
        transcript, _ = run_agent(spec, ["ctx"], box, gateway)
        replies = [t.content for t in transcript.turns if t.author == "tool"]
        read_only_ok &= sum("ToolNotPermitted" in r for r in replies) == 2
        read_only_ok &= transcript.tool_calls_made == 0
    digest_ok = tree_digest(box.workdir) == before

    # A verifier that mutates the exploit fails flag-check despite the flag.
    box2 = exploit_ready_sandbox(tmp_path / "mutate")
    cheat = (
        f"# [verifier:pre-setup]\nFLAG = \"{GOLDEN_FLAG}\"\n"
        "# [verifier:exploit-execution]\n"
        "with open(\"exploit.py\", \"w\") as fh:\n    fh.write(\"# gone\\n\")\n"
        "# [verifier:post-setup]\nprint(FLAG)\n"
    )
    outcome = check_flag(VerifierScript.build(cheat, GOLDEN_FLAG), box2, attempt_index=1)
    mutation_ok = outcome.flag_found and not outcome.success

    # An unconditional flag printer passes the checker, critic rejects it.
    box3 = exploit_ready_sandbox(tmp_path / "uncond")
    unconditional = (
        f"# [verifier:pre-setup]\nFLAG = \"{GOLDEN_FLAG}\"\n"
        "# [verifier:exploit-execution]\n# mentions exploit.py only\n"
        "# [verifier:post-setup]\nprint(FLAG)\n"
    )
    gateway, _, _ = make_gateway(
        {
            "verifier_developer": [final_turn({"script_text": unconditional})] * 5,
            "verifier_critic": [
                final_turn(
                    {
                        "analysis": "no version check, exploit never executed, "
                        "flag printed unconditionally",
                        "accepted": False,
                        "feedback": "execute the exploit and gate the flag on its trigger",
                    }
                )
            ]
            * 5,
        }
    )
    result = run_verifier_stage(
        make_golden_kb(), make_golden_exploit_report(), GOLDEN_FLAG, box3, gateway
    )
    gate_ok = (
        all(o.success for o in result.outcomes)
        and not result.accepted
        and result.failure_reason == "critic_rejected"
    )

    failed = [
        name
        for name, ok in {
            "ToolNotPermitted for read-only agents": read_only_ok,
            "sandbox digest unchanged": digest_ok,
            "mutating verifier fails despite flag": mutation_ok,
            "unconditional flag passes checker, critic rejects": gate_ok,
        }.items()
        if not ok
    ]
    _report(5, not failed, "permissions and integrity" + (f"; failed: {failed}" if failed else ""))


def test_criterion_6_ingest_correctness():
    oracle_ok = _pytest_green("tests/test_versions.py", "tests/test_advisories.py")

    registry = FixtureRegistry(GOLDEN_DIR / "registry")
    record = fetch_cve_record(registry, GOLDEN_CVE)
    repo = LocalRepoFixture(GOLDEN_DIR / "repo")
    pinned = resolve_vulnerable_version(record, repo.list_tags())
    pin_ok = pinned == "0.4.4"

    failed = []
    if not oracle_ok:
        failed.append("500-instance oracle suites")
    if not pin_ok:
        failed.append(f"fixture resolves to {pinned!r} not 0.4.4")
    _report(6, not failed, "ingest correctness" + (f"; failed: {failed}" if failed else ""))


def test_criterion_7_batch_semantics():
    ok = _pytest_green("tests/test_batch.py")
    _report(7, ok, "batch rounds: convergence, skip-reproduced, parallel == serial")


LIVE_ENABLED = os.environ.get("CVEFORGE_LIVE_SMOKE") == "1" and os.environ.get(
    "CVEFORGE_OPENAI_KEY"
)


@pytest.mark.live
@pytest.mark.skipif(
    not LIVE_ENABLED,
    reason="live smoke test: set CVEFORGE_LIVE_SMOKE=1 and CVEFORGE_OPENAI_KEY",
)
def test_criterion_8_live_smoke(tmp_path):
    """Non-deterministic, excluded from the required suite: real provider
    keys, default role bindings, $5 / 45-minute caps."""
    from cveforge.config import RunConfig

    config = RunConfig(
        artifact_root=str(tmp_path / "artifacts"),
        work_root=str(tmp_path / "work"),
    )
    state = reproduce(GOLDEN_CVE, config)
    _report(8, state.status == "reproduced", f"live smoke: {state.status_text}")
