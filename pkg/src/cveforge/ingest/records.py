"""Immutable domain types for gathered CVE resources."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass
from urllib.parse import urlparse

from cveforge.errors import MalformedRecord
from cveforge.ingest.versions import AffectedConfig

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")


def is_valid_cve_id(cve_id: str) -> bool:
    return bool(CVE_ID_RE.match(cve_id))


def is_absolute_url(url: str) -> bool:
    parsed = urlparse(url)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


@dataclass(frozen=True)
class CveRecord:
    """Normalized CVE identity and its referenced resources."""

    cve_id: str
    description: str
    cwe_ids: tuple[str, ...] = ()
    reference_urls: tuple[str, ...] = ()
    affected: tuple[AffectedConfig, ...] = ()
    repository: str = ""

    def __post_init__(self):
        if not is_valid_cve_id(self.cve_id):
            raise MalformedRecord(f"not a CVE identifier: {self.cve_id!r}")
        bad = [u for u in self.reference_urls if not is_absolute_url(u)]
        if bad:
            raise MalformedRecord(f"non-absolute reference URLs: {bad}")


@dataclass(frozen=True)
class PatchCommit:
    """A fixing commit; the id is kept even when the diff is unreachable."""

    commit_id: str
    diff_text: str = ""
    message: str = ""
    diff_unavailable: bool = False

    def __post_init__(self):
        if not self.diff_unavailable and not self.diff_text:
            raise MalformedRecord(
                f"commit {self.commit_id}: empty diff must be flagged unavailable"
            )


_ADVISORY_KEYWORDS = ("security", "advisory", "advisories", "bounty", "bounties")


@dataclass(frozen=True)
class AdvisoryDoc:
    """One scraped advisory; fetch failures keep the URL with empty text."""

    url: str
    text: str
    matched_keyword: str
    fetch_failed: bool = False

    def __post_init__(self):
        if self.matched_keyword not in _ADVISORY_KEYWORDS:
            raise MalformedRecord(
                f"keyword {self.matched_keyword!r} is not an advisory selector"
            )


@dataclass(frozen=True)
class SourceSnapshot:
    """A downloaded source tree plus its serialized directory listing."""

    root_path: str
    version_tag: str
    directory_tree: str


@dataclass(frozen=True)
class RawCveBundle:
    """Everything gathered for one CVE; read-only for all later stages."""

    record: CveRecord
    source: SourceSnapshot
    patches: tuple[PatchCommit, ...] = ()
    advisories: tuple[AdvisoryDoc, ...] = ()

    def to_json_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canonical = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
