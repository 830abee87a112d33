from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from issuetriage import labelmap, sentiment
from issuetriage.corpus import (
    CommentRecord,
    Corpus,
    EventRecord,
    IssueRecord,
    UserProfile,
    load_corpus,
)

FIXTURES = Path(__file__).parent / "fixtures"

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def make_issue(id="1", repo="acme/engine", title="Parser fails on nested input",
               description="The parser raises an error for valid nested input.",
               labels=(), n_comments=0, n_events=0, followers=0,
               created_at=T0, closed_days=10, closer=None, login="alice",
               **kwargs) -> IssueRecord:
    kwargs.setdefault("comments", tuple(
        CommentRecord(author_login=f"user{i % 3}", body="same issue here",
                      created_at=created_at + timedelta(hours=i + 1))
        for i in range(n_comments)))
    kwargs.setdefault("events", tuple(
        EventRecord(kind="labeled", created_at=created_at + timedelta(hours=i + 1))
        for i in range(n_events)))
    kwargs.setdefault("author", UserProfile(
        login=login, followers=followers,
        account_created_at=created_at - timedelta(days=400)))
    return IssueRecord(
        id=id, repo=repo, title=title, description=description,
        created_at=created_at,
        closed_at=created_at + timedelta(days=closed_days) if closed_days else None,
        labels=tuple(labels), closer_login=closer, **kwargs)


@pytest.fixture(scope="session")
def maps():
    return labelmap.load_label_maps()


@pytest.fixture(scope="session")
def lexicon():
    return sentiment.load_lexicon()


@pytest.fixture(scope="session")
def planted_corpus() -> Corpus:
    corpus, report = load_corpus(FIXTURES / "planted_corpus.jsonl")
    assert not report.errors
    return corpus
