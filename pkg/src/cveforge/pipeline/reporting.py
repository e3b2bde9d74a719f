"""Human- and machine-readable summaries of pipeline outcomes."""

from __future__ import annotations

import json

from cveforge.pipeline.batch import BatchReport
from cveforge.pipeline.state import PipelineState


def state_record(state: PipelineState) -> dict:
    """One machine-readable record per CVE attempt."""
    return {
        "cve_id": state.cve_id,
        "status": state.status_text,
        "stage": state.stage,
        "reason": state.reason_bucket,
        "cost_usd": round(state.ledger.total_cost_usd, 6),
        "seconds": round(state.elapsed_s(), 3),
        "run_dir": state.run_dir,
    }


def render_state(state: PipelineState) -> str:
    record = state_record(state)
    lines = [
        f"{record['cve_id']}: {record['status']}",
        f"  stage reached: {record['stage']}",
        f"  cost: ${record['cost_usd']:.4f}  time: {record['seconds']:.1f}s",
    ]
    if state.run_dir:
        lines.append(f"  artifacts: {state.run_dir}")
    if state.failure_detail:
        lines.append(f"  detail: {state.failure_detail}")
    return "\n".join(lines)


def batch_records(report: BatchReport) -> list[dict]:
    return [report.records[cve_id] for cve_id in sorted(report.records)]


def render_batch(report: BatchReport) -> str:
    lines = ["batch summary:"]
    for round_info in report.rounds:
        lines.append(
            f"  round {round_info['round']}: attempted {len(round_info['attempted'])}, "
            f"reproduced {len(round_info['reproduced'])}"
            + (
                f" ({', '.join(round_info['reproduced'])})"
                if round_info["reproduced"]
                else ""
            )
        )
    lines.append(
        f"  total reproduced: {len(report.reproduced_ids)}; "
        f"remaining: {len(report.remaining_ids)}"
    )
    averages = report.cost_averages()
    lines.append(
        f"  avg cost: ${averages['per_attempt_usd']:.4f}/attempt, "
        f"${averages['per_success_usd']:.4f}/success"
    )
    for record in batch_records(report):
        lines.append(
            f"  {record['cve_id']}: {record['status']} "
            f"(round {record['round']}, ${record['cost_usd']:.4f})"
        )
    return "\n".join(lines)


def write_batch_report(report: BatchReport, path) -> None:
    payload = {
        "rounds": report.rounds,
        "records": batch_records(report),
        "averages": report.cost_averages(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
