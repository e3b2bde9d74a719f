"""Gateway contracts: routing, cost accounting, caps, format correction."""

from __future__ import annotations

import json
import threading

import pytest

from cveforge.errors import (
    BudgetExceeded,
    FormatError,
    MissingRole,
    ProviderError,
    ScriptExhausted,
    UnknownProvider,
)
from cveforge.gateway.backends import ScriptedBackend, TokenUsage
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.ledger import UsageEntry, UsageLedger
from cveforge.gateway.roles import DEFAULT_BINDINGS, ROLE_NAMES, load_role_bindings
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.gateway.turns import user_turn
from tests.conftest import make_gateway


def test_scripted_echo_with_configured_pricing():
    gateway, _, ledger = make_gateway(
        {"exploit_developer": [
            {"content": "DONE", "usage": {"prompt_tokens": 1000, "completion_tokens": 500}},
        ]},
        pricing={"exploit_developer": (0.001, 0.002)},
    )
    turn, entry = gateway.complete("exploit_developer", [user_turn("go")])
    assert turn.content == "DONE"
    assert entry.cost_usd == pytest.approx(0.002)
    assert ledger.total_cost_usd == pytest.approx(0.002)


def test_budget_exceeded_without_provider_contact():
    # Ledger at 4.999; the next call is priced >= 0.002 -> never issued.
    gateway, backend, ledger = make_gateway(
        {"exploit_developer": [
            {"content": "x", "usage": {"prompt_tokens": 1000, "completion_tokens": 500}},
        ]},
        pricing={"exploit_developer": (0.001, 0.002)},
    )
    ledger.record(UsageEntry("exploit_developer", 0, 0, 4.999, 0.0))
    with pytest.raises(BudgetExceeded):
        gateway.complete("exploit_developer", [user_turn("go")])
    assert backend.call_count == 0


def test_no_call_once_cap_reached():
    gateway, backend, ledger = make_gateway(
        {"exploit_developer": [{"content": "x"}]},
    )
    ledger.record(UsageEntry("exploit_developer", 0, 0, 5.0, 0.0))
    with pytest.raises(BudgetExceeded):
        gateway.complete("exploit_developer", [user_turn("go")])
    assert backend.call_count == 0


def test_script_exhaustion_is_an_error():
    gateway, _, _ = make_gateway({"exploit_developer": []})
    with pytest.raises(ScriptExhausted):
        gateway.complete("exploit_developer", [user_turn("go")])


class _FlakyBackend:
    def __init__(self, failures: int):
        self.failures = failures
        self.calls = 0

    def complete(self, role, history, tool_schema):
        self.calls += 1
        if self.calls <= self.failures:
            raise ProviderError("transient")
        from cveforge.gateway.turns import ChatTurn

        return ChatTurn(author="assistant", content="ok"), TokenUsage(10, 5)

    def estimate_usage(self, role, history):
        return TokenUsage(10, 0)


def test_transport_retries_up_to_three():
    ledger = UsageLedger()
    backend = _FlakyBackend(failures=3)
    gateway = Gateway(load_role_bindings(), backend, ledger, 5.0, retry_base_delay_s=0.0)
    turn, _ = gateway.complete("exploit_developer", [user_turn("go")])
    assert turn.content == "ok"
    assert backend.calls == 4
    assert len(ledger) == 1  # only the successful call is recorded


def test_transport_failure_after_retries_raises():
    backend = _FlakyBackend(failures=10)
    gateway = Gateway(load_role_bindings(), backend, UsageLedger(), 5.0, retry_base_delay_s=0.0)
    with pytest.raises(ProviderError):
        gateway.complete("exploit_developer", [user_turn("go")])
    assert backend.calls == 4  # initial attempt + 3 retries


# --- enforce_format -----------------------------------------------------------

SCHEMA = OutputSchema(
    "answer", (field_spec("status", "str"), field_spec("count", "int"))
)


def test_valid_output_needs_zero_corrector_calls():
    gateway, backend, _ = make_gateway({"format_corrector": [{"content": "unused"}]})
    value = gateway.enforce_format(
        "exploit_developer", '{"status": "ok", "count": 3}', SCHEMA
    )
    assert value == {"status": "ok", "count": 3}
    assert backend.calls_by_role.get("format_corrector", 0) == 0


def test_fenced_json_parses_without_correction():
    gateway, backend, _ = make_gateway({})
    raw = 'Here you go:\n```json\n{"status": "ok", "count": 1}\n```\nthanks'
    assert gateway.enforce_format("exploit_developer", raw, SCHEMA)["count"] == 1
    assert backend.call_count == 0


def test_correction_succeeds_on_second_attempt_with_two_calls():
    gateway, backend, _ = make_gateway(
        {"format_corrector": [
            {"content": "still not json"},
            {"content": '{"status": "fixed", "count": 2}'},
        ]}
    )
    value = gateway.enforce_format("exploit_developer", "garbage", SCHEMA)
    assert value == {"status": "fixed", "count": 2}
    assert backend.calls_by_role["format_corrector"] == 2


def test_format_error_after_three_failed_corrections():
    gateway, backend, _ = make_gateway(
        {"format_corrector": [{"content": "no"}, {"content": "no"}, {"content": "no"}]}
    )
    with pytest.raises(FormatError):
        gateway.enforce_format("exploit_developer", "garbage", SCHEMA)
    assert backend.calls_by_role["format_corrector"] == 3


def test_corrector_calls_count_against_the_budget():
    gateway, backend, ledger = make_gateway(
        {"format_corrector": [
            {"content": '{"status": "ok", "count": 1}',
             "usage": {"prompt_tokens": 1000, "completion_tokens": 0}},
        ]},
        pricing={"format_corrector": (1.0, 0.0)},
    )
    gateway.enforce_format("exploit_developer", "garbage", SCHEMA)
    assert ledger.total_cost_usd == pytest.approx(1.0)


# --- role bindings ------------------------------------------------------------

def test_default_bindings_cover_all_nine_roles():
    bindings = load_role_bindings()
    assert set(bindings) == set(ROLE_NAMES)
    assert bindings["knowledge_builder"].model_id == "o4-mini"
    assert bindings["prereq_developer"].model_id == "o4-mini"
    assert bindings["setup_developer"].model_id == "o4-mini"
    assert bindings["setup_critic"].model_id == "o3"
    assert bindings["exploit_developer"].model_id == "o3"
    assert bindings["exploit_critic"].model_id == "o4-mini"
    assert bindings["verifier_developer"].model_id == "o3"
    assert bindings["verifier_critic"].model_id == "o3"
    assert bindings["format_corrector"].model_id == "gpt-4o-mini"


def test_override_single_role():
    bindings = load_role_bindings({"exploit_developer": "mock-model"})
    assert bindings["exploit_developer"].model_id == "mock-model"
    assert bindings["setup_critic"] == DEFAULT_BINDINGS["setup_critic"]


def test_removing_a_role_raises_missing_role():
    with pytest.raises(MissingRole):
        load_role_bindings({"verifier_critic": None})


def test_unknown_provider_rejected():
    with pytest.raises(UnknownProvider):
        load_role_bindings(
            {"exploit_developer": {"model": "m", "provider": "nonexistent"}}
        )


def test_unknown_role_name_rejected():
    with pytest.raises(MissingRole):
        load_role_bindings({"wizard": "m"})


# --- ledger -------------------------------------------------------------------

def test_ledger_totals_are_exact_sums():
    ledger = UsageLedger()
    for i in range(100):
        ledger.record(UsageEntry("r", i, i, 0.01, 0.001))
    assert ledger.total_cost_usd == pytest.approx(sum(0.01 for _ in range(100)), abs=1e-9)
    assert len(ledger.entries) == 100


def test_concurrent_appenders_never_lose_entries():
    ledger = UsageLedger()

    def worker():
        for _ in range(200):
            ledger.record(UsageEntry("r", 1, 1, 0.001, 0.0))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(ledger) == 1600
    assert ledger.total_cost_usd == pytest.approx(1.6, abs=1e-9)


def test_scripted_backend_loads_plain_text_scripts(tmp_path):
    (tmp_path / "scripts").mkdir()
    (tmp_path / "scripts" / "setup_critic.txt").write_text(
        "first reply\n===\nsecond reply\n"
    )
    backend = ScriptedBackend.from_dir(tmp_path)
    role = load_role_bindings()["setup_critic"]
    turn, _ = backend.complete(role, [user_turn("x")], None)
    assert turn.content == "first reply"
    turn, _ = backend.complete(role, [user_turn("x")], None)
    assert turn.content == "second reply"


def test_scripted_backend_substitutions():
    backend = ScriptedBackend(
        {"verifier_developer": [{"content": json.dumps({"script_text": "FLAG={{FLAG_TOKEN}}"})}]},
        substitutions={"FLAG_TOKEN": "abc123"},
    )
    role = load_role_bindings()["verifier_developer"]
    turn, _ = backend.complete(role, [user_turn("x")], None)
    assert "abc123" in turn.content
