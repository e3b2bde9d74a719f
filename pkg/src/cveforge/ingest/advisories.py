"""Advisory selection by URL keyword and markup-stripped scraping."""

from __future__ import annotations

import json
import re
from html.parser import HTMLParser
from pathlib import Path

from cveforge.ingest.records import AdvisoryDoc, CveRecord

ADVISORY_KEYWORDS = ("security", "advisory", "advisories", "bounty", "bounties")

# Each advisory's text is capped to keep LLM context bounded.
ADVISORY_MAX_BYTES = 100_000

_TAG_RE = re.compile(r"<[a-zA-Z/!][^>]*>")


def match_advisory_keyword(url: str) -> str | None:
    """The keyword selecting this URL, or None.

    Matching is case-insensitive substring over the five keywords; when
    several match, the longest wins (list order breaks ties).
    """
    lowered = url.lower()
    matches = [k for k in ADVISORY_KEYWORDS if k in lowered]
    if not matches:
        return None
    return max(matches, key=len)


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style", "noscript"}
    _BLOCK = {
        "p", "div", "section", "article", "li", "ul", "ol", "table", "tr",
        "br", "hr", "pre", "blockquote", "h1", "h2", "h3", "h4", "h5", "h6",
    }

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1
        elif tag in self._BLOCK:
            self.chunks.append("\n")

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1
        elif tag in self._BLOCK:
            self.chunks.append("\n")

    def handle_data(self, data):
        if not self._skip_depth:
            self.chunks.append(data)


def strip_markup(text: str) -> str:
    """Plain text from HTML-ish content; non-markup text passes through."""
    if not _TAG_RE.search(text):
        return text.strip()
    extractor = _TextExtractor()
    extractor.feed(text)
    joined = "".join(extractor.chunks)
    lines = [line.strip() for line in joined.splitlines()]
    out: list[str] = []
    for line in lines:
        if line:
            out.append(line)
        elif out and out[-1]:
            out.append("")
    return "\n".join(out).strip()


def _cap_bytes(text: str, limit: int) -> str:
    encoded = text.encode("utf-8")
    if len(encoded) <= limit:
        return text
    return encoded[:limit].decode("utf-8", errors="ignore")


class HttpAdvisoryFetcher:
    def __init__(self, timeout_s: float = 30.0):
        self.timeout_s = timeout_s

    def fetch(self, url: str) -> str:
        import httpx

        response = httpx.get(url, timeout=self.timeout_s, follow_redirects=True)
        response.raise_for_status()
        return response.text


class FixtureAdvisoryFetcher:
    """URL -> content map, optionally loaded from an advisories.json file."""

    def __init__(self, contents: dict[str, str]):
        self.contents = dict(contents)

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureAdvisoryFetcher":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def fetch(self, url: str) -> str:
        if url not in self.contents:
            raise KeyError(f"no fixture content for {url}")
        return self.contents[url]


def collect_advisories(
    record: CveRecord, fetcher, *, max_bytes: int = ADVISORY_MAX_BYTES
) -> list[AdvisoryDoc]:
    """Fetch every keyword-matching reference URL as plain text.

    Per-URL failures are recorded as fetch-failed docs with empty text;
    nothing here aborts the pipeline.
    """
    docs: list[AdvisoryDoc] = []
    for url in record.reference_urls:
        keyword = match_advisory_keyword(url)
        if keyword is None:
            continue
        try:
            raw = fetcher.fetch(url)
            text = _cap_bytes(strip_markup(raw), max_bytes)
            docs.append(AdvisoryDoc(url=url, text=text, matched_keyword=keyword))
        except Exception:
            docs.append(
                AdvisoryDoc(url=url, text="", matched_keyword=keyword, fetch_failed=True)
            )
    return docs
