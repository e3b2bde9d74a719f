"""CVE resource gathering: registry records, vulnerable-version
resolution, source download, advisories, and patch commits."""

from cveforge.ingest.records import (
    AdvisoryDoc,
    CveRecord,
    PatchCommit,
    RawCveBundle,
    SourceSnapshot,
)
from cveforge.ingest.versions import (
    AffectedConfig,
    VersionRange,
    parse_version,
    resolve_vulnerable_version,
    version_sort_key,
)
from cveforge.ingest.registry import (
    CvelistRegistry,
    FixtureRegistry,
    fetch_cve_record,
    parse_cvelist_record,
)
from cveforge.ingest.advisories import (
    ADVISORY_KEYWORDS,
    FixtureAdvisoryFetcher,
    HttpAdvisoryFetcher,
    collect_advisories,
    match_advisory_keyword,
    strip_markup,
)
from cveforge.ingest.repos import (
    GitCloneBackend,
    GitHubRepoBackend,
    LocalRepoFixture,
    collect_patch_commits,
    download_source,
    render_tree,
)
from cveforge.ingest.bundle import assemble_raw_bundle, write_bundle_layout

__all__ = [
    "ADVISORY_KEYWORDS",
    "AdvisoryDoc",
    "AffectedConfig",
    "CveRecord",
    "CvelistRegistry",
    "FixtureAdvisoryFetcher",
    "FixtureRegistry",
    "GitCloneBackend",
    "GitHubRepoBackend",
    "HttpAdvisoryFetcher",
    "LocalRepoFixture",
    "PatchCommit",
    "RawCveBundle",
    "SourceSnapshot",
    "VersionRange",
    "assemble_raw_bundle",
    "collect_advisories",
    "collect_patch_commits",
    "download_source",
    "fetch_cve_record",
    "match_advisory_keyword",
    "parse_cvelist_record",
    "parse_version",
    "render_tree",
    "resolve_vulnerable_version",
    "strip_markup",
    "version_sort_key",
    "write_bundle_layout",
]
