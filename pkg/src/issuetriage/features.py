"""Feature construction for the priority classifier.

Three blocks, concatenated in fixed order:

* TF: title TF-IDF ++ description TF-IDF ++ the three objective-class
  probabilities coming out of stage one,
* LF: 66-dim binary label-cluster vector,
* NF: 28 metadata features, min-max scaled into [0, 1].

Vectorizer and scaler are fitted once on training data and then reused
unchanged; transforming never mutates them.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import labelmap, sentiment, textnorm
from .corpus import ASSOCIATIONS, IssueRecord
from .labelmap import LabelMaps
from .sentiment import Lexicon
from .textnorm import AbstractToken, TokenizedDoc

TITLE_MAX_FEATURES = 10_000
DESC_MAX_FEATURES = 20_000
NGRAM_RANGE = (1, 2)

OBJECTIVE_PROB_ORDER = ("Bug", "Enhancement", "SupportDoc")


@dataclass(frozen=True)
class SparseVec:
    """Sorted-index sparse vector; dense enough for everything downstream."""

    indices: np.ndarray
    values: np.ndarray
    size: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.size)
        dense[self.indices] = self.values
        return dense

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2)))

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]


def ngrams(tokens: Sequence[str], ngram_range: tuple[int, int] = NGRAM_RANGE) -> list[str]:
    lo, hi = ngram_range
    out: list[str] = []
    for n in range(lo, hi + 1):
        out.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]  # term -> column
    idf: np.ndarray
    max_features: int
    ngram_range: tuple[int, int]

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"vocab": sorted(self.vocabulary.items()), "idf": [repr(x) for x in self.idf],
             "max_features": self.max_features, "ngram_range": list(self.ngram_range)},
            sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_doc(self) -> dict:
        return {"vocabulary": self.vocabulary, "idf": [float(x) for x in self.idf],
                "max_features": self.max_features, "ngram_range": list(self.ngram_range)}

    @classmethod
    def from_doc(cls, doc: dict) -> "TfidfModel":
        return cls(vocabulary=dict(doc["vocabulary"]), idf=np.asarray(doc["idf"], dtype=float),
                   max_features=int(doc["max_features"]),
                   ngram_range=tuple(doc["ngram_range"]))  # type: ignore[arg-type]


def fit_tfidf(docs: Sequence[TokenizedDoc], max_features: int,
              ngram_range: tuple[int, int] = NGRAM_RANGE) -> TfidfModel:
    """Vocabulary is the ``max_features`` most frequent n-grams by total corpus
    count (ties broken lexicographically); idf(t) = ln((1+N)/(1+df(t))) + 1."""
    if not docs:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    total: Counter[str] = Counter()
    df: Counter[str] = Counter()
    for doc in docs:
        grams = ngrams(doc.tokens, ngram_range)
        total.update(grams)
        df.update(set(grams))
    chosen = sorted(total, key=lambda t: (-total[t], t))[:max_features]
    chosen.sort()
    vocabulary = {term: i for i, term in enumerate(chosen)}
    n_docs = len(docs)
    idf = np.array([math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in chosen])
    return TfidfModel(vocabulary, idf, max_features, ngram_range)


def transform_tfidf(model: TfidfModel, doc: TokenizedDoc) -> SparseVec:
    """Term count times idf, L2-normalized; out-of-vocabulary n-grams ignored."""
    counts: Counter[int] = Counter()
    for gram in ngrams(doc.tokens, model.ngram_range):
        idx = model.vocabulary.get(gram)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return SparseVec(np.array([], dtype=int), np.array([]), model.size)
    indices = np.array(sorted(counts), dtype=int)
    values = np.array([counts[i] for i in indices], dtype=float) * model.idf[indices]
    norm = np.sqrt(np.sum(values ** 2))
    if norm > 0:
        values = values / norm
    return SparseVec(indices, values, model.size)


# ---------------------------------------------------------------------------
# Metadata features (28)

FEATURE_NAMES: tuple[str, ...] = (
    # textual
    "title_words", "desc_words", "code", "url",
    # discussion
    "comments", "cm_mean_len", "cm_developers_ratio", "time_to_discuss",
    # events
    "events", "assigned", "is_pull_request", "has_commit", "has_milestone", "labels",
    # developer
    "author_followers", "author_following", "author_public_repos",
    "author_public_gists", "author_issue_counts", "author_github_cntrb",
    "author_account_age", "author_repo_cntrb", "association", "same_author_closer",
    # sentiment
    "desc_positivity", "desc_negativity", "desc_pos_polarity", "desc_subjectivity",
)

N_METADATA_FEATURES = len(FEATURE_NAMES)
assert N_METADATA_FEATURES == 28

_ASSOCIATION_ORDINAL = {name: i for i, name in enumerate(ASSOCIATIONS)}

_lexicon_cache: Lexicon | None = None


def _default_lexicon() -> Lexicon:
    global _lexicon_cache
    if _lexicon_cache is None:
        _lexicon_cache = sentiment.load_lexicon()
    return _lexicon_cache


def count_abstractions(text: str) -> Counter:
    """How many spans each abstraction pattern matched on raw text."""
    counts: Counter[AbstractToken] = Counter()
    for token, pattern in textnorm.ABSTRACTION_TABLE:
        text, n = pattern.subn(token.surface, text)
        counts[token] += n
    return counts


def extract_metadata(issue: IssueRecord, lex: Lexicon | None = None) -> np.ndarray:
    """The 28 Table-style metadata features, unscaled, in FEATURE_NAMES order.

    All values reflect the issue's final (closed-time) state. Empty
    discussions default the four discussion features to zero.
    """
    lex = lex or _default_lexicon()
    abstraction_counts = count_abstractions(issue.description)

    n_comments = len(issue.comments)
    if n_comments:
        cm_mean_len = sum(len(c.body.split()) for c in issue.comments) / n_comments
        commenters = {c.author_login for c in issue.comments}
        cm_developers_ratio = n_comments / len(commenters)
        last = max(c.created_at for c in issue.comments)
        time_to_discuss = max(0.0, (last - issue.created_at).total_seconds() / 3600.0)
    else:
        cm_mean_len = cm_developers_ratio = time_to_discuss = 0.0

    if issue.author.account_created_at is not None:
        account_age = max(0.0, (issue.created_at - issue.author.account_created_at).days)
    else:
        account_age = 0.0

    desc_doc = textnorm.normalize_pipeline(issue.description, source="description")
    scores = sentiment.score_all(desc_doc, lex)

    values = {
        "title_words": float(len(issue.title.split())),
        "desc_words": float(len(issue.description.split())),
        "code": float(abstraction_counts[AbstractToken.CODE]),
        "url": float(abstraction_counts[AbstractToken.URL]),
        "comments": float(n_comments),
        "cm_mean_len": cm_mean_len,
        "cm_developers_ratio": cm_developers_ratio,
        "time_to_discuss": time_to_discuss,
        "events": float(len(issue.events)),
        "assigned": float(issue.assignee_present),
        "is_pull_request": float(issue.is_pull_request),
        "has_commit": float(issue.referenced_commit),
        "has_milestone": float(issue.milestone_present),
        "labels": float(len(issue.labels)),
        "author_followers": float(issue.author.followers),
        "author_following": float(issue.author.following),
        "author_public_repos": float(issue.author.public_repos),
        "author_public_gists": float(issue.author.public_gists),
        "author_issue_counts": float(issue.author.issue_count),
        "author_github_cntrb": float(issue.author.github_contributions),
        "author_account_age": account_age,
        "author_repo_cntrb": float(issue.author.repo_contributions),
        "association": float(_ASSOCIATION_ORDINAL[issue.author.association]),
        "same_author_closer": float(
            bool(issue.closer_login) and issue.closer_login == issue.author.login),
        "desc_positivity": float(scores.positivity),
        "desc_negativity": float(scores.negativity),
        # positive part of the polarity score; raw polarity is recoverable
        # from positivity/negativity if the alternative reading is wanted
        "desc_pos_polarity": max(scores.polarity, 0.0),
        "desc_subjectivity": scores.subjectivity,
    }
    return np.array([values[name] for name in FEATURE_NAMES])


# ---------------------------------------------------------------------------
# Min-max scaling

@dataclass(frozen=True)
class ScalerParams:
    minimums: np.ndarray
    maximums: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.minimums > self.maximums):
            raise ValueError("per-feature minimum exceeds maximum")

    def fingerprint(self) -> str:
        payload = json.dumps({"min": [repr(x) for x in self.minimums],
                              "max": [repr(x) for x in self.maximums]})
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_doc(self) -> dict:
        return {"min": [float(x) for x in self.minimums],
                "max": [float(x) for x in self.maximums]}

    @classmethod
    def from_doc(cls, doc: dict) -> "ScalerParams":
        return cls(np.asarray(doc["min"], dtype=float), np.asarray(doc["max"], dtype=float))


def fit_scaler(rows: Sequence[np.ndarray]) -> ScalerParams:
    if not len(rows):
        raise ValueError("cannot fit scaler on an empty training set")
    matrix = np.vstack(rows)
    return ScalerParams(matrix.min(axis=0), matrix.max(axis=0))


def scale(params: ScalerParams, row: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min), constant features pinned to 0, results
    clipped into [0, 1] so unseen test values stay in range."""
    span = params.maximums - params.minimums
    out = np.zeros_like(row, dtype=float)
    nonconst = span > 0
    out[nonconst] = (row[nonconst] - params.minimums[nonconst]) / span[nonconst]
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Assembly

@dataclass(frozen=True)
class FeatureVector:
    tf_title: SparseVec
    tf_desc: SparseVec
    objective_probs: np.ndarray
    lf: np.ndarray
    nf: np.ndarray

    def __post_init__(self) -> None:
        if abs(float(self.objective_probs.sum()) - 1.0) > 1e-9:
            raise ValueError("objective probabilities must sum to 1")
        if np.any(self.objective_probs < 0) or np.any(self.objective_probs > 1):
            raise ValueError("objective probabilities outside [0, 1]")
        if self.lf.shape != (labelmap.N_CLUSTERS,):
            raise ValueError("label feature block must be 66-dim")
        if self.nf.shape != (N_METADATA_FEATURES,):
            raise ValueError("metadata block must be 28-dim")
        if np.any(self.nf < 0) or np.any(self.nf > 1):
            raise ValueError("normalized features outside [0, 1]")

    def to_dense(self) -> np.ndarray:
        return np.concatenate([
            self.tf_title.to_dense(), self.tf_desc.to_dense(),
            self.objective_probs, self.lf.astype(float), self.nf,
        ])


@dataclass(frozen=True)
class FeaturePipeline:
    """Fitted preprocessing bundle: vectorizers, scaler and label tables."""

    tfidf_title: TfidfModel
    tfidf_desc: TfidfModel
    scaler: ScalerParams
    maps: LabelMaps
    lexicon: Lexicon = field(repr=False, default=None)  # type: ignore[assignment]

    def fingerprints(self) -> dict[str, str]:
        out = {"tfidf_title": self.tfidf_title.fingerprint(),
               "tfidf_desc": self.tfidf_desc.fingerprint(),
               "scaler": self.scaler.fingerprint()}
        out.update(self.maps.checksums())
        return out

    def assemble(self, issue: IssueRecord, objective_probs: np.ndarray) -> FeatureVector:
        title_doc = textnorm.normalize_pipeline(issue.title, source="title")
        desc_doc = textnorm.normalize_pipeline(issue.description, source="description")
        return FeatureVector(
            tf_title=transform_tfidf(self.tfidf_title, title_doc),
            tf_desc=transform_tfidf(self.tfidf_desc, desc_doc),
            objective_probs=np.asarray(objective_probs, dtype=float),
            lf=labelmap.label_features(issue.labels, self.maps.clusters),
            nf=scale(self.scaler, extract_metadata(issue, self.lexicon)),
        )

    def feature_names(self) -> list[str]:
        inv_title = {i: t for t, i in self.tfidf_title.vocabulary.items()}
        inv_desc = {i: t for t, i in self.tfidf_desc.vocabulary.items()}
        names = [f"tf:title:{inv_title[i]}" for i in range(self.tfidf_title.size)]
        names += [f"tf:desc:{inv_desc[i]}" for i in range(self.tfidf_desc.size)]
        names += [f"tf:prob:{c}" for c in OBJECTIVE_PROB_ORDER]
        names += [f"lf:{rep}" for rep in self.maps.clusters.representatives]
        names += [f"nf:{name}" for name in FEATURE_NAMES]
        return names


def fit_feature_pipeline(
    issues: Iterable[IssueRecord],
    maps: LabelMaps,
    lex: Lexicon | None = None,
    title_max_features: int = TITLE_MAX_FEATURES,
    desc_max_features: int = DESC_MAX_FEATURES,
    ngram_range: tuple[int, int] = NGRAM_RANGE,
) -> FeaturePipeline:
    issues = list(issues)
    lex = lex or _default_lexicon()
    title_docs = [textnorm.normalize_pipeline(i.title, source="title") for i in issues]
    desc_docs = [textnorm.normalize_pipeline(i.description, source="description") for i in issues]
    return FeaturePipeline(
        tfidf_title=fit_tfidf(title_docs, title_max_features, ngram_range),
        tfidf_desc=fit_tfidf(desc_docs, desc_max_features, ngram_range),
        scaler=fit_scaler([extract_metadata(i, lex) for i in issues]),
        maps=maps,
        lexicon=lex,
    )
