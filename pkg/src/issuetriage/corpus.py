"""Issue corpus: domain records, line-delimited persistence, filtering, splits.

A corpus is a flat sequence of issue records plus provenance. On disk it is
one JSON document per line (UTF-8) with a small sidecar metadata file that
carries the schema version and provenance. Unknown keys on a record are kept
in ``extra`` and written back untouched on save.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

SCHEMA_VERSION = 1

ASSOCIATIONS = ("None", "Contributor", "Collaborator", "Member", "Owner")

# Labels whose cluster marks an issue as removable noise (see filter_corpus).
EXCLUDED_CLUSTERS_DEFAULT = ("duplicate", "invalid")


class CorpusError(Exception):
    """Raised for unreadable corpus files or schema mismatches."""


class ObjectiveClass(Enum):
    BUG = "Bug"
    ENHANCEMENT = "Enhancement"
    SUPPORT_DOC = "SupportDoc"


class PriorityClass(Enum):
    HIGH = "High"
    LOW = "Low"


def parse_ts(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class UserProfile:
    login: str
    followers: int = 0
    following: int = 0
    public_repos: int = 0
    public_gists: int = 0
    issue_count: int = 0
    github_contributions: int = 0
    account_created_at: Optional[datetime] = None
    repo_contributions: int = 0
    association: str = "None"

    def __post_init__(self) -> None:
        for name in ("followers", "following", "public_repos", "public_gists",
                     "issue_count", "github_contributions", "repo_contributions"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.association not in ASSOCIATIONS:
            raise ValueError(f"unknown association {self.association!r}")


@dataclass(frozen=True)
class CommentRecord:
    author_login: str
    body: str
    created_at: datetime


@dataclass(frozen=True)
class EventRecord:
    kind: str
    created_at: datetime

    def __post_init__(self) -> None:
        if not self.kind:
            raise ValueError("event kind must be non-empty")


@dataclass(frozen=True)
class IssueRecord:
    """One issue as fetched, with raw text and final (closed-time) metadata."""

    id: str
    repo: str
    title: str
    description: str
    state: str = "closed"
    created_at: datetime = field(default_factory=lambda: datetime(2020, 1, 1, tzinfo=timezone.utc))
    closed_at: Optional[datetime] = None
    labels: tuple[str, ...] = ()
    is_pull_request: bool = False
    milestone_present: bool = False
    assignee_present: bool = False
    comments: tuple[CommentRecord, ...] = ()
    events: tuple[EventRecord, ...] = ()
    author: UserProfile = field(default_factory=lambda: UserProfile(login=""))
    closer_login: Optional[str] = None
    referenced_commit: bool = False
    hydration_failed: bool = False
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if self.closed_at is not None and self.created_at > self.closed_at:
            raise ValueError(f"issue {self.id}: created_at after closed_at")
        folded = [lb.casefold() for lb in self.labels]
        if len(set(folded)) != len(folded):
            raise ValueError(f"issue {self.id}: duplicate labels after case-folding")


@dataclass(frozen=True)
class Corpus:
    issues: tuple[IssueRecord, ...]
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        ids = [i.id for i in self.issues]
        if len(set(ids)) != len(ids):
            raise ValueError("issue ids must be unique within a corpus")

    def __len__(self) -> int:
        return len(self.issues)

    def repos(self) -> list[str]:
        return sorted({i.repo for i in self.issues})


# ---------------------------------------------------------------------------
# Serialization

def _issue_to_doc(issue: IssueRecord) -> dict:
    doc = {
        "id": issue.id,
        "repo": issue.repo,
        "title": issue.title,
        "description": issue.description,
        "state": issue.state,
        "created_at": format_ts(issue.created_at),
        "closed_at": format_ts(issue.closed_at) if issue.closed_at else None,
        "labels": list(issue.labels),
        "is_pull_request": issue.is_pull_request,
        "milestone_present": issue.milestone_present,
        "assignee_present": issue.assignee_present,
        "comments": [
            {"author_login": c.author_login, "body": c.body, "created_at": format_ts(c.created_at)}
            for c in issue.comments
        ],
        "events": [{"kind": e.kind, "created_at": format_ts(e.created_at)} for e in issue.events],
        "author": {
            "login": issue.author.login,
            "followers": issue.author.followers,
            "following": issue.author.following,
            "public_repos": issue.author.public_repos,
            "public_gists": issue.author.public_gists,
            "issue_count": issue.author.issue_count,
            "github_contributions": issue.author.github_contributions,
            "account_created_at": (
                format_ts(issue.author.account_created_at)
                if issue.author.account_created_at else None
            ),
            "repo_contributions": issue.author.repo_contributions,
            "association": issue.author.association,
        },
        "closer_login": issue.closer_login,
        "referenced_commit": issue.referenced_commit,
        "hydration_failed": issue.hydration_failed,
    }
    doc.update(issue.extra)
    return doc


_KNOWN_KEYS = {
    "id", "repo", "title", "description", "state", "created_at", "closed_at",
    "labels", "is_pull_request", "milestone_present", "assignee_present",
    "comments", "events", "author", "closer_login", "referenced_commit",
    "hydration_failed",
}


def _issue_from_doc(doc: dict) -> IssueRecord:
    author_doc = doc.get("author") or {"login": ""}
    author = UserProfile(
        login=author_doc.get("login", ""),
        followers=author_doc.get("followers", 0),
        following=author_doc.get("following", 0),
        public_repos=author_doc.get("public_repos", 0),
        public_gists=author_doc.get("public_gists", 0),
        issue_count=author_doc.get("issue_count", 0),
        github_contributions=author_doc.get("github_contributions", 0),
        account_created_at=(
            parse_ts(author_doc["account_created_at"])
            if author_doc.get("account_created_at") else None
        ),
        repo_contributions=author_doc.get("repo_contributions", 0),
        association=author_doc.get("association", "None"),
    )
    return IssueRecord(
        id=str(doc["id"]),
        repo=doc["repo"],
        title=doc["title"],
        description=doc.get("description") or "",
        state=doc.get("state", "closed"),
        created_at=parse_ts(doc["created_at"]),
        closed_at=parse_ts(doc["closed_at"]) if doc.get("closed_at") else None,
        labels=tuple(doc.get("labels", [])),
        is_pull_request=bool(doc.get("is_pull_request", False)),
        milestone_present=bool(doc.get("milestone_present", False)),
        assignee_present=bool(doc.get("assignee_present", False)),
        comments=tuple(
            CommentRecord(c["author_login"], c["body"], parse_ts(c["created_at"]))
            for c in doc.get("comments", [])
        ),
        events=tuple(
            EventRecord(e["kind"], parse_ts(e["created_at"])) for e in doc.get("events", [])
        ),
        author=author,
        closer_login=doc.get("closer_login"),
        referenced_commit=bool(doc.get("referenced_commit", False)),
        hydration_failed=bool(doc.get("hydration_failed", False)),
        extra={k: v for k, v in doc.items() if k not in _KNOWN_KEYS},
    )


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for issue in corpus.issues:
            fh.write(json.dumps(_issue_to_doc(issue), sort_keys=True, ensure_ascii=False))
            fh.write("\n")
    meta = {"schema_version": corpus.schema_version, "provenance": corpus.provenance}
    _meta_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@dataclass
class LoadReport:
    errors: list[tuple[int, str]] = field(default_factory=list)  # (line number, message)

    @property
    def ok(self) -> bool:
        return not self.errors


def load_corpus(path: str | Path, strict: bool = False) -> tuple[Corpus, LoadReport]:
    """Load a line-delimited corpus file.

    Malformed lines are collected into the report with their 1-based line
    numbers; with ``strict`` the first such line raises instead.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    meta_file = _meta_path(path)
    provenance: dict = {}
    schema_version = SCHEMA_VERSION
    if meta_file.exists():
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        schema_version = meta.get("schema_version", SCHEMA_VERSION)
        if schema_version != SCHEMA_VERSION:
            raise CorpusError(
                f"schema version mismatch: file has {schema_version}, reader expects {SCHEMA_VERSION}"
            )
        provenance = meta.get("provenance", {})

    issues: list[IssueRecord] = []
    report = LoadReport()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                issues.append(_issue_from_doc(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                if strict:
                    raise CorpusError(f"line {lineno}: {exc}") from exc
                report.errors.append((lineno, str(exc)))
    return Corpus(issues=tuple(issues), provenance=provenance, schema_version=schema_version), report


# ---------------------------------------------------------------------------
# Filtering

@dataclass(frozen=True)
class FilterConfig:
    min_text_chars: int = 3
    non_english_threshold: float = 0.5
    excluded_clusters: tuple[str, ...] = EXCLUDED_CLUSTERS_DEFAULT


@dataclass
class FilterReport:
    removed_short_text: int = 0
    removed_non_english: int = 0
    removed_excluded_label: int = 0

    @property
    def total_removed(self) -> int:
        return self.removed_short_text + self.removed_non_english + self.removed_excluded_label

    def as_dict(self) -> dict:
        return {
            "removed_short_text": self.removed_short_text,
            "removed_non_english": self.removed_non_english,
            "removed_excluded_label": self.removed_excluded_label,
            "total_removed": self.total_removed,
        }


def _non_ascii_fraction(text: str) -> float:
    meaningful = [ch for ch in text if not ch.isspace()]
    if not meaningful:
        return 0.0
    outside = sum(1 for ch in meaningful if not (" " <= ch <= "~"))
    return outside / len(meaningful)


def filter_corpus(
    corpus: Corpus,
    rules: FilterConfig | None = None,
    cluster_of: Optional[Callable[[str], Optional[str]]] = None,
) -> tuple[Corpus, FilterReport]:
    """Drop issues with too little text, mostly non-English text, or noise labels.

    ``cluster_of`` maps a raw label to its cluster representative; when given,
    exclusion matches at the cluster level (so e.g. "t-duplicate" is removed),
    otherwise raw labels are compared after case-folding.
    """
    rules = rules or FilterConfig()
    kept: list[IssueRecord] = []
    report = FilterReport()
    excluded = {c.casefold() for c in rules.excluded_clusters}
    for issue in corpus.issues:
        if len(issue.title.strip()) < rules.min_text_chars or len(issue.description.strip()) < rules.min_text_chars:
            report.removed_short_text += 1
            continue
        text = issue.title + " " + issue.description
        if _non_ascii_fraction(text) > rules.non_english_threshold:
            report.removed_non_english += 1
            continue
        hit = False
        for label in issue.labels:
            if cluster_of is not None:
                rep = cluster_of(label)
                hit = rep is not None and rep.casefold() in excluded
            else:
                hit = any(marker in label.casefold() for marker in excluded) or \
                    label.casefold() in ("not an issue", "not-an-issue")
            if hit:
                break
        if hit:
            report.removed_excluded_label += 1
            continue
        kept.append(issue)
    return Corpus(issues=tuple(kept), provenance=corpus.provenance,
                  schema_version=corpus.schema_version), report


# ---------------------------------------------------------------------------
# Splitting

def stratified_split(
    corpus: Corpus,
    target: Callable[[IssueRecord], object],
    ratio: float,
    seed: int,
) -> tuple[Corpus, Corpus]:
    """Split per class, keeping each part's class counts within one of count*ratio.

    Each class is shuffled with its own deterministic generator, then the first
    ceil(count * ratio) members go to the first part. Classes with fewer than
    two members go entirely to the larger part.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    by_class: dict[object, list[IssueRecord]] = {}
    for issue in corpus.issues:
        key = target(issue)
        if key is None:
            raise ValueError(f"issue {issue.id} yields no target label")
        by_class.setdefault(key, []).append(issue)

    first: list[IssueRecord] = []
    second: list[IssueRecord] = []
    larger_is_first = ratio >= 0.5
    rng = random.Random(seed)
    for key in sorted(by_class, key=str):
        members = list(by_class[key])
        rng.shuffle(members)
        if len(members) < 2:
            (first if larger_is_first else second).extend(members)
            continue
        # remainder rounding favors the first (training) part
        n_first = int(-(-len(members) * ratio // 1))
        n_first = min(n_first, len(members))
        first.extend(members[:n_first])
        second.extend(members[n_first:])

    def ordered(part: list[IssueRecord]) -> tuple[IssueRecord, ...]:
        chosen = {i.id for i in part}
        return tuple(i for i in corpus.issues if i.id in chosen)

    return (
        Corpus(ordered(first), corpus.provenance, corpus.schema_version),
        Corpus(ordered(second), corpus.provenance, corpus.schema_version),
    )


def random_issue_id(rng: random.Random, length: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(length))


def subset(corpus: Corpus, issues: Iterable[IssueRecord]) -> Corpus:
    return Corpus(tuple(issues), corpus.provenance, corpus.schema_version)


def with_provenance(corpus: Corpus, **fields: object) -> Corpus:
    prov = dict(corpus.provenance)
    prov.update(fields)
    return replace(corpus, provenance=prov)
