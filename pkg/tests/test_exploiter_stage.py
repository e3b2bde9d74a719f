"""Exploit stage: demonstration in-sandbox, integrity, critic wiring."""

from __future__ import annotations

import hashlib

import pytest

from cveforge.errors import StageFailure
from cveforge.sandbox.base import SandboxConfig
from cveforge.sandbox.local import LocalSandboxBackend
from cveforge.stages.builder import SetupReport
from cveforge.stages.exploiter import develop_exploit
from tests.conftest import (
    GOLDEN_DIR,
    final_turn,
    golden_exploit_script,
    load_golden_scripts,
    make_gateway,
    make_golden_kb,
    tool_turn,
)

SETUP = SetupReport(
    success=True,
    access_instructions="PYTHONPATH=. exposes sqlparse 0.4.4 from the project root",
    setup_summary="source tree serves the pinned version",
)


@pytest.fixture
def ready_sandbox(tmp_path):
    backend = LocalSandboxBackend(
        tmp_path / "sbx", SandboxConfig(foreground_timeout_s=30.0)
    )
    handle = backend.create(source_dir=GOLDEN_DIR / "repo" / "tags" / "0.4.4")
    handle.env_store.set("PYTHONPATH", ".")
    yield handle
    handle.close()


def test_golden_exploit_demonstrated_and_digest_matches(ready_sandbox):
    scripts = load_golden_scripts()
    gateway, _, _ = make_gateway(
        {
            "exploit_developer": scripts["exploit_developer"],
            "exploit_critic": scripts["exploit_critic"],
        }
    )
    report, cycle = develop_exploit(make_golden_kb(), SETUP, ready_sandbox, gateway)
    assert cycle.accepted and report is not None and report.success
    # the demonstration really ran: the PoC's crash is in the logs
    crash_log = ready_sandbox.command_logs[-1]
    assert "RecursionError" in crash_log.stderr_path.read_text()
    assert crash_log.exit_code == 1
    # report and sandbox agree on the script, byte for byte
    on_disk = (ready_sandbox.workdir / "exploit.py").read_bytes()
    assert hashlib.sha256(on_disk).hexdigest() == report.poc_digest()
    # format contract: argv input plus documented example input
    assert "sys.argv" in report.poc_script
    assert report.example_input == "10000"
    assert "10000" in report.poc_script


def test_accepted_success_with_mismatched_script_fails_integrity(ready_sandbox):
    poc = golden_exploit_script()
    answer = {
        "success": True,
        "exploit_overview": "o",
        "poc_script": poc + "\n# edited after the fact\n",
        "example_input": "10000",
        "demonstrated_evidence": "see .logs/0001_err.log",
    }
    gateway, _, _ = make_gateway(
        {
            "exploit_developer": [
                tool_turn("write_to_file", path="exploit.py", content=poc),
                tool_turn("execute_linux_command", command="python3 exploit.py 10000"),
                final_turn(answer),
            ],
            "exploit_critic": [
                final_turn({"analysis": "looks fine", "accepted": True, "feedback": ""})
            ],
        }
    )
    with pytest.raises(StageFailure) as info:
        develop_exploit(make_golden_kb(), SETUP, ready_sandbox, gateway)
    assert info.value.reason == "exploit_integrity"


def test_never_executed_claim_is_surfaced_to_critic(ready_sandbox):
    answer = {
        "success": True,
        "exploit_overview": "claims success without running anything",
        "poc_script": golden_exploit_script(),
        "example_input": "10000",
        "demonstrated_evidence": "it definitely crashed, trust me",
    }
    reject = {
        "analysis": "no executed run demonstrates the exploit; the cited evidence is not a log",
        "accepted": False,
        "feedback": "actually execute the PoC in the sandbox and cite its log file",
    }
    gateway, backend, _ = make_gateway(
        {
            "exploit_developer": [final_turn(answer), final_turn(answer)],
            "exploit_critic": [final_turn(reject), final_turn(reject)],
        }
    )
    report, cycle = develop_exploit(
        make_golden_kb(), SETUP, ready_sandbox, gateway, max_feedback=1
    )
    assert not cycle.accepted
    critic_prompt = cycle.critic_transcripts[0].turns[1].content
    assert "evidence cites an existing command log: NO" in critic_prompt
    assert "does not exist in the sandbox" in critic_prompt


def test_honest_failure_report(ready_sandbox):
    gateway, _, _ = make_gateway(
        {
            "exploit_developer": [
                final_turn(
                    {
                        "success": False,
                        "exploit_overview": "could not trigger the crash",
                        "poc_script": "",
                        "example_input": "",
                        "demonstrated_evidence": "",
                    }
                )
            ],
            "exploit_critic": [
                final_turn({"analysis": "honest", "accepted": False, "feedback": "retry with deeper nesting"})
            ],
        }
    )
    report, cycle = develop_exploit(
        make_golden_kb(), SETUP, ready_sandbox, gateway, max_feedback=0
    )
    assert report is not None and not report.success
    assert not cycle.accepted


def test_exploit_stage_leaves_kb_untouched(ready_sandbox):
    kb = make_golden_kb()
    digest_before = kb.digest()
    scripts = load_golden_scripts()
    gateway, _, _ = make_gateway(
        {
            "exploit_developer": scripts["exploit_developer"],
            "exploit_critic": scripts["exploit_critic"],
        }
    )
    develop_exploit(kb, SETUP, ready_sandbox, gateway)
    assert kb.digest() == digest_before
