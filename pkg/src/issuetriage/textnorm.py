"""Deterministic text pipeline for issue titles and descriptions.

Stage order is fixed: entity abstraction, cleaning, whitespace tokenization,
identifier splitting, stopword removal (negations and compulsory modals are
kept), suffix lemmatization. Abstract entities are rendered as opaque
``⟨NAME⟩`` tokens that survive every later stage unchanged.

The abstraction pattern table below is the single source of truth for what
gets replaced and in which order. Ordering constraints that matter:
code before URLs (fenced blocks may contain links), URLs before paths
(a URL contains slashes), dates/times before paths (slashed dates), and
emails before usernames (an email contains ``@``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources


class AbstractToken(Enum):
    CODE = "CODE"
    URL = "URL"
    EMAIL = "EMAIL"
    PATH = "PATH"
    DATE = "DATE"
    TIME = "TIME"
    USER = "USER"
    FUNC = "FUNC"
    MD = "MD"

    @property
    def surface(self) -> str:
        # U+27E8/U+27E9 brackets: non-ASCII on purpose, so no pattern and no
        # cleaning rule can ever touch a rendered token.
        return f"⟨{self.value}⟩"


_SURFACE_RE = re.compile(r"⟨[A-Z]+⟩")

# (token, pattern) pairs, applied in order. Inner character classes exclude
# the ⟨⟩ markers so a second application can never re-match around an
# already-abstracted span.
ABSTRACTION_TABLE: tuple[tuple[AbstractToken, re.Pattern], ...] = (
    (AbstractToken.CODE, re.compile(r"```.*?```", re.DOTALL)),
    (AbstractToken.CODE, re.compile(r"`[^`\n⟨⟩]+`")),
    (AbstractToken.URL, re.compile(r"(?:https?://|www\.)[^\s<>()\"'`⟨⟩]+")),
    (AbstractToken.EMAIL, re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")),
    (AbstractToken.DATE, re.compile(
        r"\b(?:\d{4}-\d{2}-\d{2}|\d{1,2}[/-]\d{1,2}[/-]\d{2,4}|\d{4}/\d{1,2}/\d{1,2})\b")),
    (AbstractToken.TIME, re.compile(r"\b\d{1,2}:\d{2}(?::\d{2})?(?:\s?[ap]\.?m\.?)?\b", re.IGNORECASE)),
    (AbstractToken.PATH, re.compile(
        r"(?:~|\.{1,2})?[\w.+-]*(?:/[\w.+-]+){2,}/?|\b[A-Za-z]:\\[\w.\\+-]+")),
    (AbstractToken.USER, re.compile(r"(?<![\w@])@[A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?\b")),
    (AbstractToken.FUNC, re.compile(r"\b[A-Za-z_][\w.]*\([^()\n⟨⟩]*\)")),
    (AbstractToken.MD, re.compile(
        r"(?m)^[ \t]{0,3}#{1,6}(?=\s)"          # heading marker
        r"|^[ \t]*(?:-{3,}|\*{3,}|_{3,})[ \t]*$"  # horizontal rule
        r"|^[ \t]*>+(?=\s)"                      # blockquote marker
        r"|^[ \t]*[-*+](?=\s)"                   # bullet marker
        r"|\*\*+|__+|~~+"                        # bold / strikethrough
        r"|\[[ xX]\](?=\s|$)")),                 # task-list checkbox
)

RETAINED_WORDS = frozenset({"not", "no", "never", "must", "should", "cannot"})


def abstract_entities(text: str) -> str:
    """Replace user-names, code, URLs, paths, dates etc. with abstract tokens."""
    for token, pattern in ABSTRACTION_TABLE:
        text = pattern.sub(token.surface, text)
    return text


_APOSTROPHE_RE = re.compile(r"(?<=[A-Za-z])['’](?=[A-Za-z])")
_QUESTION_RE = re.compile(r"\?+")
_PUNCT_RE = re.compile(r"[^\w\s?⟨⟩]|_")
_LONE_DIGITS_RE = re.compile(r"\b\d+\b")
_NON_ASCII_RE = re.compile(r"[^\x20-\x7e\s⟨⟩]")


def clean(text: str) -> str:
    """Strip punctuation (question marks survive as their own token),
    standalone digit runs, and non-ASCII characters. Casing is preserved
    because identifier splitting still needs it; abstract tokens pass
    through untouched."""
    parts: list[str] = []
    pos = 0
    for m in _SURFACE_RE.finditer(text):
        parts.append(_clean_segment(text[pos:m.start()]))
        parts.append(m.group(0))
        pos = m.end()
    parts.append(_clean_segment(text[pos:]))
    return " ".join(p for p in parts if p)


def _clean_segment(segment: str) -> str:
    segment = _NON_ASCII_RE.sub("", segment)
    segment = _APOSTROPHE_RE.sub("", segment)
    segment = _QUESTION_RE.sub(" ? ", segment)
    segment = _PUNCT_RE.sub(" ", segment)
    segment = _LONE_DIGITS_RE.sub(" ", segment)
    return " ".join(segment.split())


_IDENT_PART_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[a-z0-9]+")


def split_identifiers(token: str) -> list[str]:
    """Split snake_case, camelCase, PascalCase and acronym boundaries;
    parts come back lowercased."""
    parts: list[str] = []
    for piece in token.split("_"):
        parts.extend(m.group(0).lower() for m in _IDENT_PART_RE.finditer(piece))
    return parts


# ---------------------------------------------------------------------------
# Stopwords and lemmas

def _load_wordlist(name: str) -> list[str]:
    raw = resources.files("issuetriage.data").joinpath(name).read_text(encoding="utf-8")
    out = []
    for line in raw.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


_STOPWORDS: frozenset[str] | None = None


def stopwords() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        _STOPWORDS = frozenset(_load_wordlist("stopwords.txt")) - RETAINED_WORDS
    return _STOPWORDS


# Irregular and e-dropping forms the suffix rules cannot recover.
_LEMMA_EXCEPTIONS = {
    "parsing": "parse", "parsed": "parse",
    "using": "use", "used": "use",
    "making": "make", "made": "make",
    "taking": "take", "taken": "take", "took": "take",
    "coming": "come", "came": "come",
    "giving": "give", "given": "give", "gave": "give",
    "having": "have", "has": "have", "had": "have",
    "creating": "create", "created": "create",
    "updating": "update", "updated": "update",
    "removing": "remove", "removed": "remove",
    "causing": "cause", "caused": "cause",
    "closing": "close", "closed": "close",
    "managing": "manage", "managed": "manage",
    "writing": "write", "written": "write", "wrote": "write",
    "saving": "save", "saved": "save",
    "moving": "move", "moved": "move",
    "changing": "change", "changed": "change",
    "merging": "merge", "merged": "merge",
    "serving": "serve", "served": "serve",
    "providing": "provide", "provided": "provide",
    "improving": "improve", "improved": "improve",
    "releasing": "release", "released": "release",
    "handling": "handle", "handled": "handle",
    "enabling": "enable", "enabled": "enable",
    "disabling": "disable", "disabled": "disable",
    "configuring": "configure", "configured": "configure",
    "comparing": "compare", "compared": "compare",
    "resolving": "resolve", "resolved": "resolve",
    "upgrading": "upgrade", "upgraded": "upgrade",
    "ran": "run", "running": "run",
    "went": "go", "gone": "go", "going": "go",
    "getting": "get", "got": "get",
    "broke": "break", "broken": "break", "breaking": "break",
    "built": "build",
    "said": "say", "saw": "see", "seen": "see",
    "done": "do", "did": "do", "doing": "do",
    "being": "be", "was": "be", "were": "be",
    "children": "child",
    "found": "find",
    "threw": "throw", "thrown": "throw",
}

_DOUBLED_OK = set("lsz")  # keep ll / ss / zz (fell, miss, buzz)


def lemmatize(token: str) -> str:
    """Suffix-stripping lemmatizer for plural, -ing, -ed and -ly forms."""
    word = _LEMMA_EXCEPTIONS.get(token)
    if word is not None:
        return word
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith("sses"):
        return token[:-2]
    if len(token) > 4 and token.endswith(("ches", "shes", "xes", "zes", "oes")):
        return token[:-2]
    if token.endswith("s") and not token.endswith(("ss", "us", "is")) and len(token) > 3:
        return token[:-1]
    if token.endswith("ing") and len(token) >= 6:
        return _undouble(token[:-3])
    if token.endswith("ed") and len(token) >= 5:
        return _undouble(token[:-2])
    if token.endswith("ly") and len(token) >= 5:
        return token[:-2]
    return token


def _undouble(stem: str) -> str:
    if len(stem) >= 2 and stem[-1] == stem[-2] and stem[-1] not in _DOUBLED_OK:
        return stem[:-1]
    return stem


# ---------------------------------------------------------------------------
# Full pipeline

@dataclass(frozen=True)
class TokenizedDoc:
    tokens: tuple[str, ...]
    source: str = "description"

    def __post_init__(self) -> None:
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"bad token {tok!r}")
            if tok.isdigit():
                raise ValueError(f"digits-only token {tok!r}")

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def is_abstract(token: str) -> bool:
    return bool(_SURFACE_RE.fullmatch(token))


def normalize_pipeline(text: str, source: str = "description") -> TokenizedDoc:
    stops = stopwords()
    cleaned = clean(abstract_entities(text))
    out: list[str] = []
    for raw_tok in cleaned.split():
        if is_abstract(raw_tok) or raw_tok == "?":
            out.append(raw_tok)
            continue
        for part in split_identifiers(raw_tok):
            if not part or part.isdigit():
                continue
            if part in stops and part not in RETAINED_WORDS:
                continue
            lemma = lemmatize(part)
            if lemma and not lemma.isdigit():
                out.append(lemma)
    return TokenizedDoc(tokens=tuple(out), source=source)
