"""Bundle assembly and the on-disk bundle layout."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from cveforge.errors import MalformedRecord
from cveforge.ingest.records import (
    AdvisoryDoc,
    CveRecord,
    PatchCommit,
    RawCveBundle,
    SourceSnapshot,
)


def assemble_raw_bundle(
    record: CveRecord,
    source: SourceSnapshot,
    patches: list[PatchCommit] | tuple[PatchCommit, ...] = (),
    advisories: list[AdvisoryDoc] | tuple[AdvisoryDoc, ...] = (),
) -> RawCveBundle:
    """Freeze everything gathered for a CVE into an immutable bundle.

    Empty patches/advisories are legal (degraded-context mode); a missing
    repository is not, because nothing downstream can work without source.
    """
    if not record.repository:
        raise MalformedRecord(
            f"{record.cve_id}: repository was never resolved for this record"
        )
    return RawCveBundle(
        record=record,
        source=source,
        patches=tuple(patches),
        advisories=tuple(advisories),
    )


def write_bundle_layout(bundle: RawCveBundle, cve_dir: str | Path) -> Path:
    """Persist the bundle as ``<cve_dir>/bundle/{record.json, advisories/,
    patches/, source/}``; the source tree is expected in place already."""
    bundle_dir = Path(cve_dir) / "bundle"
    bundle_dir.mkdir(parents=True, exist_ok=True)

    record_doc = asdict(bundle.record)
    record_doc["source"] = {
        "root_path": bundle.source.root_path,
        "version_tag": bundle.source.version_tag,
    }
    record_doc["digest"] = bundle.digest()
    (bundle_dir / "record.json").write_text(
        json.dumps(record_doc, indent=2, sort_keys=True), encoding="utf-8"
    )
    (bundle_dir / "directory_tree.txt").write_text(
        bundle.source.directory_tree, encoding="utf-8"
    )

    advisories_dir = bundle_dir / "advisories"
    advisories_dir.mkdir(exist_ok=True)
    for index, advisory in enumerate(bundle.advisories):
        (advisories_dir / f"{index:03d}.json").write_text(
            json.dumps(asdict(advisory), indent=2, sort_keys=True), encoding="utf-8"
        )

    patches_dir = bundle_dir / "patches"
    patches_dir.mkdir(exist_ok=True)
    for index, patch in enumerate(bundle.patches):
        (patches_dir / f"{index:03d}_{patch.commit_id[:12]}.diff").write_text(
            patch.diff_text, encoding="utf-8"
        )
        (patches_dir / f"{index:03d}_{patch.commit_id[:12]}.json").write_text(
            json.dumps(
                {
                    "commit_id": patch.commit_id,
                    "message": patch.message,
                    "diff_unavailable": patch.diff_unavailable,
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    (bundle_dir / "source").mkdir(exist_ok=True)
    return bundle_dir
