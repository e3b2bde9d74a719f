"""CVE registry backends and record parsing (cvelist 5.x format)."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from urllib.parse import urlparse

from cveforge.errors import CveNotFound, MalformedRecord, RegistryUnavailable
from cveforge.ingest.records import CveRecord, is_absolute_url, is_valid_cve_id
from cveforge.ingest.versions import AffectedConfig, VersionRange

logger = logging.getLogger(__name__)

REPO_HOSTS = ("github.com", "gitlab.com", "bitbucket.org", "codeberg.org")


def repository_from_url(url: str) -> str | None:
    """Normalize a reference URL to its repository root, if it has one."""
    parsed = urlparse(url)
    host = parsed.netloc.lower().removeprefix("www.")
    if host not in REPO_HOSTS:
        return None
    parts = [p for p in parsed.path.split("/") if p]
    if len(parts) < 2:
        return None
    owner, repo = parts[0], parts[1].removesuffix(".git")
    return f"https://{host}/{owner}/{repo}"


def parse_cvelist_record(doc: dict) -> CveRecord:
    """Raise MalformedRecord on any deviation from the fields we need."""
    try:
        cve_id = doc["cveMetadata"]["cveId"]
        cna = doc["containers"]["cna"]
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(f"record lacks cveMetadata/containers.cna: {exc}") from exc
    if not is_valid_cve_id(cve_id):
        raise MalformedRecord(f"bad cveId in record: {cve_id!r}")

    descriptions = cna.get("descriptions") or []
    description = ""
    for entry in descriptions:
        if str(entry.get("lang", "")).lower().startswith("en"):
            description = entry.get("value", "")
            break
    if not description and descriptions:
        description = descriptions[0].get("value", "")
    if not description:
        raise MalformedRecord(f"{cve_id}: record has no description")

    cwe_ids = []
    for problem in cna.get("problemTypes") or []:
        for entry in problem.get("descriptions") or []:
            cwe = entry.get("cweId")
            if cwe and cwe not in cwe_ids:
                cwe_ids.append(cwe)

    references = []
    for ref in cna.get("references") or []:
        url = ref.get("url", "")
        if is_absolute_url(url):
            references.append(url)

    affected = []
    for product in cna.get("affected") or []:
        notes = " ".join(
            str(product.get(key, "")) for key in ("vendor", "product") if product.get(key)
        )
        platforms = product.get("platforms")
        if platforms:
            notes += f" [{', '.join(platforms)}]"
        for version_entry in product.get("versions") or []:
            if version_entry.get("status") != "affected":
                continue
            affected.append(
                AffectedConfig(
                    version_range=VersionRange.from_cvelist_entry(version_entry),
                    platform_notes=notes.strip(),
                )
            )

    repository = ""
    alternatives = []
    for url in references:
        candidate = repository_from_url(url)
        if candidate:
            if not repository:
                repository = candidate
            elif candidate != repository and candidate not in alternatives:
                alternatives.append(candidate)
    if alternatives:
        logger.info(
            "%s: using repository %s; alternatives in references: %s",
            cve_id,
            repository,
            ", ".join(alternatives),
        )

    return CveRecord(
        cve_id=cve_id,
        description=description,
        cwe_ids=tuple(cwe_ids),
        reference_urls=tuple(references),
        affected=tuple(affected),
        repository=repository,
    )


class FixtureRegistry:
    """Local directory of pre-fetched records, one ``<CVE>.json`` each."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def fetch(self, cve_id: str) -> CveRecord:
        path = self.root / f"{cve_id}.json"
        if not path.is_file():
            raise CveNotFound(f"no fixture record for {cve_id}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise RegistryUnavailable(f"fixture record unreadable: {exc}") from exc
        return parse_cvelist_record(doc)


class CvelistRegistry:
    """Public per-CVE record mirror (raw cvelist 5.x documents)."""

    DEFAULT_BASE = "https://raw.githubusercontent.com/CVEProject/cvelistV5/main/cves"

    def __init__(self, base_url: str = DEFAULT_BASE, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def _record_url(self, cve_id: str) -> str:
        _, year, number = cve_id.split("-")
        bucket = f"{int(number) // 1000}xxx"
        return f"{self.base_url}/{year}/{bucket}/{cve_id}.json"

    def fetch(self, cve_id: str) -> CveRecord:
        import httpx

        try:
            response = httpx.get(
                self._record_url(cve_id),
                timeout=self.timeout_s,
                follow_redirects=True,
            )
        except httpx.HTTPError as exc:
            raise RegistryUnavailable(f"registry unreachable: {exc}") from exc
        if response.status_code == 404:
            raise CveNotFound(f"registry has no record for {cve_id}")
        if response.status_code != 200:
            raise RegistryUnavailable(
                f"registry returned HTTP {response.status_code} for {cve_id}"
            )
        try:
            doc = response.json()
        except json.JSONDecodeError as exc:
            raise RegistryUnavailable(f"registry returned non-JSON: {exc}") from exc
        return parse_cvelist_record(doc)


def fetch_cve_record(registry, cve_id: str, *, repo_override: str = "") -> CveRecord:
    """Resolve a CVE id to a normalized record via the given registry.

    An operator-supplied repository URL takes precedence over anything
    found in the record's references (closed-source escape hatch).
    """
    if not is_valid_cve_id(cve_id):
        raise MalformedRecord(f"not a syntactically valid CVE id: {cve_id!r}")
    record = registry.fetch(cve_id)
    if record.cve_id != cve_id:
        raise MalformedRecord(
            f"registry returned {record.cve_id} for requested {cve_id}"
        )
    if repo_override:
        import dataclasses

        record = dataclasses.replace(record, repository=repo_override)
    return record
