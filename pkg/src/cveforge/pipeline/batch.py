"""Round-based batch runs: fresh sandboxes per attempt, successes stored
and removed from the worklist, per-CVE failures isolated."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from cveforge.config import RunConfig
from cveforge.pipeline.orchestrator import build_services, reproduce
from cveforge.pipeline.state import PipelineState


@dataclass
class BatchReport:
    """Per-round convergence plus the final per-CVE records."""

    rounds: list[dict] = field(default_factory=list)
    records: dict[str, dict] = field(default_factory=dict)

    @property
    def reproduced_ids(self) -> list[str]:
        return sorted(
            cve_id
            for cve_id, record in self.records.items()
            if record["status"] == "reproduced"
        )

    @property
    def remaining_ids(self) -> list[str]:
        return sorted(
            cve_id
            for cve_id, record in self.records.items()
            if record["status"] != "reproduced"
        )

    def round_counts(self) -> list[int]:
        return [len(r["reproduced"]) for r in self.rounds]

    def cost_averages(self) -> dict:
        """Both per-attempt and per-success averages are reported."""
        attempt_costs = [r["cost_usd"] for r in self.records.values()]
        success_costs = [
            r["cost_usd"]
            for r in self.records.values()
            if r["status"] == "reproduced"
        ]
        return {
            "per_attempt_usd": (
                sum(attempt_costs) / len(attempt_costs) if attempt_costs else 0.0
            ),
            "per_success_usd": (
                sum(success_costs) / len(success_costs) if success_costs else 0.0
            ),
        }


def _state_to_record(state: PipelineState, round_index: int) -> dict:
    return {
        "cve_id": state.cve_id,
        "status": "reproduced" if state.status == "reproduced" else state.status_text,
        "stage": state.stage,
        "reason": state.reason_bucket,
        "cost_usd": state.ledger.total_cost_usd,
        "seconds": state.elapsed_s(),
        "round": round_index,
    }


def batch_run(
    cve_ids: list[str],
    max_rounds: int,
    config: RunConfig,
    *,
    services_factory: Callable | None = None,
) -> BatchReport:
    """Attempt every CVE per round, dropping reproduced ones; stop early
    when the worklist empties. Parallelism never changes the outcome:
    each attempt gets its own services, sandbox, and ledger."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    services_factory = services_factory or (
        lambda cve_id, round_index: build_services(config, cve_id, round_index)
    )

    seen: set[str] = set()
    worklist: list[str] = []
    for cve_id in cve_ids:
        cve_id = cve_id.strip()
        if cve_id and cve_id not in seen:
            seen.add(cve_id)
            worklist.append(cve_id)

    report = BatchReport()
    for round_index in range(1, max_rounds + 1):
        pending = [c for c in worklist if report.records.get(c, {}).get("status") != "reproduced"]
        if not pending:
            break

        def attempt(cve_id: str) -> PipelineState:
            services = services_factory(cve_id, round_index)
            return reproduce(cve_id, config, services=services, round_index=round_index)

        if config.parallelism > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                states = list(pool.map(attempt, pending))
        else:
            states = [attempt(cve_id) for cve_id in pending]

        reproduced_now = []
        for state in states:
            report.records[state.cve_id] = _state_to_record(state, round_index)
            if state.status == "reproduced":
                reproduced_now.append(state.cve_id)
        report.rounds.append(
            {
                "round": round_index,
                "attempted": list(pending),
                "reproduced": sorted(reproduced_now),
            }
        )
    return report
