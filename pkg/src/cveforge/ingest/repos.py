"""Repository backends: tag listing, source download, commit diffs.

Three implementations share one interface: a local fixture layout for
offline runs, the GitHub REST API, and a plain git-clone fallback for
other hosts.
"""

from __future__ import annotations

import logging
import os
import re
import shutil
import subprocess
import tarfile
import tempfile
from pathlib import Path

from cveforge.errors import (
    DiffUnavailable,
    DownloadFailed,
    EmptyTree,
    MalformedRecord,
    NoAffectedVersion,
    TagMissing,
)
from cveforge.ingest.records import CveRecord, PatchCommit, SourceSnapshot
from cveforge.ingest.versions import AFFECTED

logger = logging.getLogger(__name__)

TREE_MAX_DEPTH = 4
TREE_MAX_ENTRIES = 2000

_COMMIT_URL_RE = re.compile(r"/(?:commit|commits)/([0-9a-fA-F]{7,40})(?:[/?#.]|$)")


def render_tree(
    root: str | Path,
    *,
    max_depth: int = TREE_MAX_DEPTH,
    max_entries: int = TREE_MAX_ENTRIES,
) -> str:
    """Depth- and size-limited listing of a tree, one relative path per line."""
    root = Path(root)
    entries: list[str] = []
    truncated = False
    for current, dirnames, filenames in os.walk(root):
        rel = Path(current).relative_to(root)
        depth = 0 if str(rel) == "." else len(rel.parts)
        if depth >= max_depth:
            dirnames[:] = []
            continue
        dirnames.sort()
        filenames.sort()
        for name in dirnames:
            entries.append(str(rel / name) + "/" if str(rel) != "." else name + "/")
        for name in filenames:
            entries.append(str(rel / name) if str(rel) != "." else name)
        if len(entries) > max_entries:
            truncated = True
            break
    entries = sorted(entries)[:max_entries]
    if truncated:
        entries.append(f"... (listing truncated at {max_entries} entries)")
    return "\n".join(entries)


class LocalRepoFixture:
    """Offline repository layout: ``tags/<tag>/<tree>`` and
    ``commits/<sha>.diff`` (optional ``<sha>.message``)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def list_tags(self) -> list[str]:
        tags_dir = self.root / "tags"
        if not tags_dir.is_dir():
            return []
        return sorted(d.name for d in tags_dir.iterdir() if d.is_dir())

    def download(self, version: str, dest: Path) -> None:
        tree = self.root / "tags" / version
        if not tree.is_dir():
            raise TagMissing(f"fixture repo has no tag {version!r}")
        shutil.copytree(tree, dest, dirs_exist_ok=True)

    def fetch_commit_diff(self, sha: str) -> tuple[str, str]:
        diff_path = self.root / "commits" / f"{sha}.diff"
        if not diff_path.is_file():
            raise DiffUnavailable(f"no fixture diff for commit {sha}")
        message_path = self.root / "commits" / f"{sha}.message"
        message = (
            message_path.read_text(encoding="utf-8").strip()
            if message_path.is_file()
            else ""
        )
        return diff_path.read_text(encoding="utf-8"), message


class GitHubRepoBackend:
    """GitHub REST API: tag listing, tag tarballs, commit diffs."""

    def __init__(
        self,
        repository: str,
        api_base: str = "https://api.github.com",
        token_env: str = "CVEFORGE_GITHUB_KEY",
        timeout_s: float = 60.0,
    ):
        parts = [p for p in repository.split("/") if p]
        if len(parts) < 2:
            raise MalformedRecord(f"not a repository URL: {repository!r}")
        self.owner, self.repo = parts[-2], parts[-1].removesuffix(".git")
        self.api_base = api_base.rstrip("/")
        self.timeout_s = timeout_s
        self._token = os.environ.get(token_env, "")

    def _headers(self, accept: str = "application/vnd.github+json") -> dict:
        headers = {"Accept": accept}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        return headers

    def list_tags(self) -> list[str]:
        import httpx

        tags: list[str] = []
        url = f"{self.api_base}/repos/{self.owner}/{self.repo}/tags?per_page=100"
        for _ in range(20):
            response = httpx.get(url, headers=self._headers(), timeout=self.timeout_s)
            if response.status_code != 200:
                raise DownloadFailed(
                    f"tag listing failed with HTTP {response.status_code}"
                )
            tags.extend(entry["name"] for entry in response.json())
            next_url = response.links.get("next", {}).get("url")
            if not next_url:
                break
            url = next_url
        return tags

    def download(self, version: str, dest: Path) -> None:
        import httpx

        url = (
            f"https://codeload.github.com/{self.owner}/{self.repo}"
            f"/tar.gz/refs/tags/{version}"
        )
        response = httpx.get(url, timeout=self.timeout_s, follow_redirects=True)
        if response.status_code == 404:
            raise TagMissing(f"{self.owner}/{self.repo} has no tag {version!r}")
        if response.status_code != 200:
            raise DownloadFailed(f"tarball fetch failed: HTTP {response.status_code}")
        with tempfile.NamedTemporaryFile(suffix=".tar.gz") as tmp:
            tmp.write(response.content)
            tmp.flush()
            _extract_tarball_strip1(tmp.name, dest)

    def fetch_commit_diff(self, sha: str) -> tuple[str, str]:
        import httpx

        base = f"{self.api_base}/repos/{self.owner}/{self.repo}/commits/{sha}"
        diff_response = httpx.get(
            base,
            headers=self._headers("application/vnd.github.diff"),
            timeout=self.timeout_s,
        )
        if diff_response.status_code != 200:
            raise DiffUnavailable(
                f"diff fetch for {sha} failed: HTTP {diff_response.status_code}"
            )
        message = ""
        meta_response = httpx.get(base, headers=self._headers(), timeout=self.timeout_s)
        if meta_response.status_code == 200:
            message = meta_response.json().get("commit", {}).get("message", "")
        return diff_response.text, message


class GitCloneBackend:
    """Plain revision-control fallback for non-GitHub hosts."""

    def __init__(self, repository: str, timeout_s: float = 300.0):
        self.repository = repository
        self.timeout_s = timeout_s

    def _git(self, *args: str, cwd: Path | None = None) -> subprocess.CompletedProcess:
        return subprocess.run(
            ["git", *args],
            capture_output=True,
            text=True,
            timeout=self.timeout_s,
            cwd=cwd,
        )

    def list_tags(self) -> list[str]:
        result = self._git("ls-remote", "--tags", self.repository)
        if result.returncode != 0:
            raise DownloadFailed(f"git ls-remote failed: {result.stderr.strip()}")
        tags = []
        for line in result.stdout.splitlines():
            _, _, ref = line.partition("\t")
            if ref.startswith("refs/tags/") and not ref.endswith("^{}"):
                tags.append(ref.removeprefix("refs/tags/"))
        return tags

    def download(self, version: str, dest: Path) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            clone_dir = Path(tmp) / "clone"
            result = self._git(
                "clone", "--depth", "1", "--branch", version,
                self.repository, str(clone_dir),
            )
            if result.returncode != 0:
                stderr = result.stderr.lower()
                if "not found" in stderr or "couldn't find remote ref" in stderr:
                    raise TagMissing(f"no tag {version!r} at {self.repository}")
                raise DownloadFailed(f"git clone failed: {result.stderr.strip()}")
            shutil.rmtree(clone_dir / ".git", ignore_errors=True)
            shutil.copytree(clone_dir, dest, dirs_exist_ok=True)

    def fetch_commit_diff(self, sha: str) -> tuple[str, str]:
        with tempfile.TemporaryDirectory() as tmp:
            clone_dir = Path(tmp) / "clone"
            result = self._git(
                "clone", "--filter=blob:none", "--no-checkout",
                self.repository, str(clone_dir),
            )
            if result.returncode != 0:
                raise DiffUnavailable(f"clone for diff failed: {result.stderr.strip()}")
            show = self._git("show", "--format=%B%n---", "--patch", sha, cwd=clone_dir)
            if show.returncode != 0:
                raise DiffUnavailable(f"git show {sha} failed: {show.stderr.strip()}")
            message, _, diff = show.stdout.partition("\n---\n")
            return diff.strip() or show.stdout, message.strip()


def _extract_tarball_strip1(archive: str, dest: Path) -> None:
    """Extract a release tarball, dropping the top-level directory."""
    dest.mkdir(parents=True, exist_ok=True)
    with tarfile.open(archive, "r:gz") as tar:
        for member in tar.getmembers():
            parts = Path(member.name).parts
            if len(parts) <= 1:
                continue
            relative = Path(*parts[1:])
            target = dest / relative
            if not str(target.resolve()).startswith(str(dest.resolve())):
                raise DownloadFailed(f"tarball path escapes destination: {member.name}")
            if member.isdir():
                target.mkdir(parents=True, exist_ok=True)
            elif member.isfile():
                target.parent.mkdir(parents=True, exist_ok=True)
                extracted = tar.extractfile(member)
                if extracted is None:
                    continue
                with open(target, "wb") as out:
                    shutil.copyfileobj(extracted, out)


def download_source(
    record: CveRecord, version: str, dest: str | Path, backend
) -> SourceSnapshot:
    """Materialize exactly one tagged version of the source at ``dest``."""
    if not record.repository:
        raise MalformedRecord(
            f"{record.cve_id}: no repository resolved; supply one explicitly"
        )
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    backend.download(version, dest)
    if not any(dest.rglob("*")):
        raise EmptyTree(f"downloaded tree at {dest} is empty")
    if not any(cfg.classify(version) == AFFECTED for cfg in record.affected):
        raise NoAffectedVersion(
            f"{version!r} is not classified affected by any configuration"
        )
    return SourceSnapshot(
        root_path=str(dest),
        version_tag=version,
        directory_tree=render_tree(dest),
    )


def collect_patch_commits(record: CveRecord, backend) -> list[PatchCommit]:
    """Fetch diffs for every commit reference pointing into the repository.

    Reference order is preserved; per-commit fetch failures are recorded
    as unavailable diffs rather than raised.
    """
    commits: list[PatchCommit] = []
    repo_base = record.repository.rstrip("/")
    for url in record.reference_urls:
        if repo_base and not url.startswith(repo_base):
            continue
        match = _COMMIT_URL_RE.search(url)
        if not match:
            continue
        sha = match.group(1)
        try:
            diff, message = backend.fetch_commit_diff(sha)
            commits.append(PatchCommit(commit_id=sha, diff_text=diff, message=message))
        except Exception as exc:
            logger.warning("diff unavailable for %s: %s", sha, exc)
            commits.append(PatchCommit(commit_id=sha, diff_unavailable=True))
    return commits
