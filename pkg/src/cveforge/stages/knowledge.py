"""Knowledge distillation: one completion turns the raw bundle into the
structured long-term memory every downstream agent receives."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from cveforge.agents.prompts import KNOWLEDGE_BUILDER_PROMPT
from cveforge.agents.spec import OUTCOME_FINAL, OUTCOME_FORMAT, AgentTranscript
from cveforge.errors import FormatError
from cveforge.gateway.backends import estimate_tokens
from cveforge.gateway.gateway import Gateway
from cveforge.gateway.schemas import OutputSchema, field_spec
from cveforge.gateway.turns import system_turn, user_turn
from cveforge.ingest.records import RawCveBundle

POC_PROVENANCES = ("extracted", "hypothesized")
UNAVAILABLE = "unavailable"

# Inputs rendered into the builder's context are clipped per item so one
# huge advisory cannot crowd out the rest.
_CONTEXT_ITEM_CHARS = 24_000

KB_SCHEMA = OutputSchema(
    name="knowledge_base",
    fields=(
        field_spec("summary", "str", description="distilled vulnerability summary"),
        field_spec("cwe_list", "list", description="CWE identifiers"),
        field_spec("affected_summary", "str", description="affected versions/platforms"),
        field_spec("root_cause", "str", description="root cause; mark inferred guesses"),
        field_spec("poc_provenance", "str", description='"extracted" or "hypothesized"'),
        field_spec("poc_details", "str", description="PoC steps/code or exploit outline"),
        field_spec("patch_digest", "str", description="patch insight with file/function hints"),
        field_spec("advisory_digest", "str", description="essential advisory content"),
    ),
    checks=(
        lambda value: (
            None
            if value.get("poc_provenance") in POC_PROVENANCES
            else 'poc_provenance must be "extracted" or "hypothesized"'
        ),
    ),
)


@dataclass(frozen=True)
class KnowledgeBase:
    """Distilled CVE context; immutable once built."""

    cve_id: str
    summary: str
    cwe_list: tuple[str, ...]
    affected_summary: str
    root_cause: str
    poc_provenance: str
    poc_details: str
    patch_digest: str
    advisory_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        ).hexdigest()

    def token_estimate(self) -> int:
        return estimate_tokens(self.to_json())

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data["cwe_list"] = tuple(data.get("cwe_list", ()))
        return cls(**data)


def render_bundle_context(bundle: RawCveBundle) -> str:
    """The raw resources as one text block for the distillation call."""
    record = bundle.record
    parts = [
        f"CVE id: {record.cve_id}",
        f"Description: {record.description}",
        f"CWE tags: {', '.join(record.cwe_ids) or '(none)'}",
        "Affected configurations: "
        + (
            "; ".join(
                " ".join(f"{op} {v}" for op, v in cfg.version_range.constraints)
                + (f" ({cfg.platform_notes})" if cfg.platform_notes else "")
                for cfg in record.affected
            )
            or "(none listed)"
        ),
        f"Resolved vulnerable version: {bundle.source.version_tag}",
        f"Project directory tree:\n{_clip(bundle.source.directory_tree)}",
    ]
    if bundle.advisories:
        for advisory in bundle.advisories:
            status = "fetch failed" if advisory.fetch_failed else "scraped"
            parts.append(
                f"Advisory ({status}, matched {advisory.matched_keyword!r}) "
                f"{advisory.url}:\n{_clip(advisory.text) or '(empty)'}"
            )
    else:
        parts.append("Advisories: none available")
    if bundle.patches:
        for patch in bundle.patches:
            body = "(diff unavailable)" if patch.diff_unavailable else _clip(patch.diff_text)
            parts.append(
                f"Patch commit {patch.commit_id}:\n"
                + (f"message: {patch.message}\n" if patch.message else "")
                + body
            )
    else:
        parts.append("Patch commits: none available")
    return "\n\n".join(parts)


def build_knowledge_base(
    bundle: RawCveBundle,
    gateway: Gateway,
    *,
    token_budget: int,
    guard=None,
    on_transcript=None,
) -> tuple[KnowledgeBase, AgentTranscript]:
    """One tool-less completion produces the KB via the format corrector.

    FormatError propagates: with an unusable KB everything downstream is
    wasted spend, so the pipeline fails at its cheapest stage.
    """
    if guard is not None:
        guard.check()
    history = [
        system_turn(KNOWLEDGE_BUILDER_PROMPT + "\n\n" + KB_SCHEMA.describe()),
        user_turn(render_bundle_context(bundle)),
    ]
    transcript = AgentTranscript(agent="knowledge_builder", turns=list(history))
    try:
        turn, _ = gateway.complete("knowledge_builder", history)
        transcript.append(turn)
        transcript.outcome = OUTCOME_FINAL
        answer = gateway.enforce_format("knowledge_builder", turn.content, KB_SCHEMA)
    except FormatError:
        transcript.outcome = OUTCOME_FORMAT
        if on_transcript is not None:
            on_transcript(transcript)
        raise
    if on_transcript is not None:
        on_transcript(transcript)
    kb = KnowledgeBase(
        cve_id=bundle.record.cve_id,
        summary=_or_unavailable(answer["summary"]),
        cwe_list=tuple(str(c) for c in answer["cwe_list"]),
        affected_summary=_or_unavailable(answer["affected_summary"]),
        root_cause=_or_unavailable(answer["root_cause"]),
        poc_provenance=answer["poc_provenance"],
        poc_details=_or_unavailable(answer["poc_details"]),
        patch_digest=_or_unavailable(answer["patch_digest"]),
        advisory_digest=_or_unavailable(answer["advisory_digest"]),
    )
    return _fit_to_budget(kb, token_budget), transcript


def _or_unavailable(text: str) -> str:
    return text.strip() or UNAVAILABLE


def _clip(text: str, limit: int = _CONTEXT_ITEM_CHARS) -> str:
    if len(text) <= limit:
        return text
    return text[:limit] + "\n...[clipped]"


_TRIM_ORDER = ("advisory_digest", "patch_digest", "poc_details", "root_cause", "summary")
_TRIM_MARK = " ...[truncated to fit the context budget]"


def _fit_to_budget(kb: KnowledgeBase, token_budget: int) -> KnowledgeBase:
    """Mechanical enforcement of the serialized-size invariant: shrink the
    longest digest fields until the whole KB fits."""
    import dataclasses

    while kb.token_estimate() > token_budget:
        overshoot_chars = (kb.token_estimate() - token_budget) * 4
        name = max(_TRIM_ORDER, key=lambda n: len(getattr(kb, n)))
        value = getattr(kb, name)
        if len(value) <= len(_TRIM_MARK) + 16:
            break
        keep = max(16, len(value) - max(overshoot_chars, 256) - len(_TRIM_MARK))
        kb = dataclasses.replace(kb, **{name: value[:keep] + _TRIM_MARK})
    return kb
