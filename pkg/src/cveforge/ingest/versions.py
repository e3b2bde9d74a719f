"""Version parsing, affected-range classification, and tag resolution.

Ordering semantics: tags that parse as semver compare with semver
precedence (pre-releases sort below their release); tags that are plain
dotted numeric segments compare numerically with trailing zeros ignored
(1.0 == 1.0.0); anything else is "unknown" and excluded from resolution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from cveforge.errors import AmbiguousVersioning, NoAffectedVersion

_SEMVER_RE = re.compile(
    r"^(\d+)\.(\d+)\.(\d+)"
    r"(?:-([0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*))?"
    r"(?:\+[0-9A-Za-z.-]+)?$"
)
_DOTTED_RE = re.compile(r"^\d+(?:\.\d+)*$")

AFFECTED = "affected"
NOT_AFFECTED = "not_affected"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class ParsedVersion:
    release: tuple[int, ...]
    prerelease: tuple[str, ...] | None = None


def normalize_tag(tag: str) -> str:
    tag = tag.strip()
    if tag[:1] in ("v", "V") and len(tag) > 1 and tag[1].isdigit():
        tag = tag[1:]
    return tag


def parse_version(text: str) -> ParsedVersion | None:
    """Parse a version string; None means unorderable ("unknown")."""
    text = normalize_tag(text)
    match = _SEMVER_RE.match(text)
    if match:
        release = tuple(int(match.group(i)) for i in (1, 2, 3))
        prerelease = tuple(match.group(4).split(".")) if match.group(4) else None
        return ParsedVersion(release=release, prerelease=prerelease)
    if _DOTTED_RE.match(text):
        return ParsedVersion(release=tuple(int(p) for p in text.split(".")))
    return None


def _identifier_key(identifier: str):
    if identifier.isdigit():
        return (0, int(identifier), "")
    return (1, 0, identifier)


def version_sort_key(version: ParsedVersion):
    """Total-order key; release > its own pre-releases; 1.0 == 1.0.0."""
    release = version.release
    while len(release) > 1 and release[-1] == 0:
        release = release[:-1]
    if version.prerelease is None:
        return (release, 1, ())
    return (release, 0, tuple(_identifier_key(i) for i in version.prerelease))


def _compare(candidate: ParsedVersion, op: str, bound: ParsedVersion) -> bool:
    a, b = version_sort_key(candidate), version_sort_key(bound)
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    raise ValueError(f"unknown version operator: {op!r}")


_CONSTRAINT_RE = re.compile(r"^(<=|>=|==|<|>)?\s*(\S+)$")


@dataclass(frozen=True)
class VersionRange:
    """A predicate over version strings, as a conjunction of constraints.

    An empty constraint list matches every parseable version. Candidates
    (or bounds) that fail to parse classify as "unknown".
    """

    constraints: tuple[tuple[str, str], ...] = ()

    def classify(self, candidate: str) -> str:
        parsed = parse_version(candidate)
        if parsed is None:
            return UNKNOWN
        for op, bound_text in self.constraints:
            bound = parse_version(bound_text)
            if bound is None:
                return UNKNOWN
            if not _compare(parsed, op, bound):
                return NOT_AFFECTED
        return AFFECTED

    @classmethod
    def from_text(cls, text: str) -> "VersionRange":
        """Parse e.g. "< 0.5.0", ">= 1.2, < 2.0", "== 1.0.1", "1.0.1"."""
        constraints = []
        for part in text.split(","):
            part = part.strip()
            if not part or part == "*":
                continue
            match = _CONSTRAINT_RE.match(part)
            if not match:
                raise ValueError(f"unparseable version constraint: {part!r}")
            op = match.group(1) or "=="
            constraints.append((op, match.group(2)))
        return cls(constraints=tuple(constraints))

    @classmethod
    def from_cvelist_entry(cls, entry: dict) -> "VersionRange":
        """Build a range from one cvelist ``versions[]`` element."""
        constraints = []
        version = str(entry.get("version", "")).strip()
        less_than = entry.get("lessThan")
        less_or_equal = entry.get("lessThanOrEqual")
        if less_than is not None:
            if version not in ("", "0", "*"):
                constraints.append((">=", version))
            constraints.append(("<", str(less_than)))
        elif less_or_equal is not None:
            if version not in ("", "0", "*"):
                constraints.append((">=", version))
            constraints.append(("<=", str(less_or_equal)))
        elif version and version != "*":
            constraints.append(("==", version))
        return cls(constraints=tuple(constraints))


@dataclass(frozen=True)
class AffectedConfig:
    """One affected software configuration from the CVE record."""

    version_range: VersionRange
    platform_notes: str = ""

    def classify(self, candidate: str) -> str:
        return self.version_range.classify(candidate)


def resolve_vulnerable_version(record, available_tags: list[str]) -> str:
    """Latest tag classified affected by any config; pure and
    permutation-invariant (ties in precedence break on the tag string)."""
    if not available_tags:
        raise ValueError("available_tags must be non-empty")
    parseable = {
        tag: parsed
        for tag in available_tags
        if (parsed := parse_version(tag)) is not None
    }
    if not parseable:
        raise AmbiguousVersioning(
            f"none of {len(available_tags)} tags parse as versions"
        )
    affected = [
        tag
        for tag in parseable
        if any(cfg.classify(tag) == AFFECTED for cfg in record.affected)
    ]
    if not affected:
        raise NoAffectedVersion(
            f"no tag among {len(available_tags)} is classified affected"
        )
    return max(affected, key=lambda tag: (version_sort_key(parseable[tag]), tag))
