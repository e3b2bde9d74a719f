"""Operator entry point: reproduce one CVE, run batches, show artifacts."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from cveforge.config import ConfigError, load_config
from cveforge.errors import ArtifactNotFound
from cveforge.pipeline.batch import batch_run
from cveforge.pipeline.orchestrator import reproduce
from cveforge.pipeline.reporting import (
    batch_records,
    render_batch,
    render_state,
    state_record,
    write_batch_report,
)

EXIT_OK = 0
EXIT_CVE_FAILURE = 1
EXIT_INFRASTRUCTURE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cveforge",
        description=(
            "Reproduce CVEs end to end: gather resources, rebuild the "
            "vulnerable environment, generate a PoC exploit, and emit a "
            "flag-releasing verifier."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML config file (models, caps, sandbox, providers)")
        p.add_argument("--mock", metavar="DIR", help="fixture directory: scripted LLM turns plus offline registry/repo/advisories")
        p.add_argument("--budget", type=float, metavar="USD", help="per-CVE cost cap")
        p.add_argument("--deadline", type=float, metavar="MIN", help="per-CVE wall-clock cap in minutes")
        p.add_argument("--parallel", type=int, metavar="N", help="concurrent pipelines in batch runs")
        p.add_argument("--artifacts", metavar="DIR", help="artifact store root")
        p.add_argument("--repo-url", metavar="URL", help="repository override for closed-source or unlinked projects")

    p_reproduce = sub.add_parser("reproduce", help="reproduce a single CVE")
    p_reproduce.add_argument("cve_id")
    common(p_reproduce)

    p_batch = sub.add_parser("batch", help="run a list of CVEs in retry rounds")
    p_batch.add_argument("id_list_file", help="file with one CVE id per line")
    p_batch.add_argument("--rounds", type=int, default=None, metavar="N", help="maximum retry rounds (default 3)")
    p_batch.add_argument("--report", metavar="FILE", help="write the machine-readable batch report here")
    common(p_batch)

    p_show = sub.add_parser("show", help="summarize stored artifacts for a CVE")
    p_show.add_argument("cve_id")
    p_show.add_argument("--artifacts", metavar="DIR", default="artifacts")
    return parser


def _resolve_config(args: argparse.Namespace):
    """Flag overrides always win over config-file values."""
    import dataclasses

    config = load_config(args.config, mock_dir=args.mock)
    if args.budget is not None:
        config = config.replace(
            caps=dataclasses.replace(config.caps, budget_usd=args.budget)
        )
    if args.deadline is not None:
        config = config.replace(
            caps=dataclasses.replace(config.caps, deadline_minutes=args.deadline)
        )
    if args.parallel is not None:
        config = config.replace(parallelism=args.parallel)
    if args.artifacts is not None:
        config = config.replace(artifact_root=args.artifacts)
    if args.repo_url is not None:
        config = config.replace(repo_url=args.repo_url)
    if getattr(args, "rounds", None) is not None:
        config = config.replace(rounds=args.rounds)
    return config


def cmd_reproduce(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    state = reproduce(args.cve_id, config)
    print(render_state(state))
    print(json.dumps(state_record(state), sort_keys=True))
    return EXIT_OK if state.status == "reproduced" else EXIT_CVE_FAILURE


def cmd_batch(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    id_file = Path(args.id_list_file)
    if not id_file.is_file():
        print(f"id list file not found: {id_file}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    cve_ids = [line.strip() for line in id_file.read_text(encoding="utf-8").splitlines()]
    cve_ids = [c for c in cve_ids if c and not c.startswith("#")]
    report = batch_run(cve_ids, config.rounds, config)
    print(render_batch(report))
    for record in batch_records(report):
        print(json.dumps(record, sort_keys=True))
    if args.report:
        write_batch_report(report, args.report)
    return EXIT_OK


def cmd_show(args: argparse.Namespace) -> int:
    base = Path(args.artifacts) / args.cve_id
    runs = sorted(base.glob("run_*")) if base.is_dir() else []
    if not runs:
        raise ArtifactNotFound(f"no stored artifacts for {args.cve_id} under {args.artifacts}")
    print(f"{args.cve_id}: {len(runs)} stored run(s)")
    for run_dir in runs:
        meta_path = run_dir / "metadata.json"
        record_path = run_dir / "run_record.json"
        meta = {}
        if meta_path.is_file():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        elif record_path.is_file():
            meta = json.loads(record_path.read_text(encoding="utf-8"))
        status = meta.get("status", "unknown")
        cost = meta.get("cost_usd", 0.0)
        print(f"  {run_dir.name}: status={status} cost=${cost:.4f}")
        for name in ("kb.json", "exploit", "verifier", "metadata.json", "snapshot.ref"):
            if (run_dir / name).exists():
                print(f"    {run_dir / name}")
        transcripts = sorted((run_dir / "transcripts").glob("*.jsonl"))
        if transcripts:
            print(f"    transcripts ({len(transcripts)}):")
            for t in transcripts:
                print(f"      {t.name}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args)
        if args.command == "batch":
            return cmd_batch(args)
        if args.command == "show":
            return cmd_show(args)
    except ArtifactNotFound as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CVE_FAILURE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    return EXIT_INFRASTRUCTURE


if __name__ == "__main__":
    sys.exit(main())
