"""Comment tokenization, keyword/control-word selection and keyword features."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DataError

_APOSTROPHES = re.compile(r"['’‘ʼ`]")
_NON_ALNUM = re.compile(r"[\W_]+")

SECTIONS = ("keywords", "control_function", "control_content", "matched")


class InsufficientVocabulary(DataError):
    pass


class ControlSelectionError(DataError):
    pass


def tokenize(comment: str) -> list[str]:
    """Lowercase, delete apostrophes, split on every other non-alphanumeric."""
    text = _APOSTROPHES.sub("", comment.lower())
    return _NON_ALNUM.sub(" ", text).split()


def document_frequencies(comments: Iterable[str]) -> Counter:
    """Number of comments containing each token (repeats within a comment count once)."""
    df: Counter = Counter()
    for c in comments:
        df.update(set(tokenize(c)))
    return df


def _load_lines(name: str) -> list[str]:
    text = resources.files("goprobe.data").joinpath(name).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def stopwords() -> frozenset[str]:
    return frozenset(_load_lines("stopwords.txt"))


def go_terms() -> list[str]:
    return _load_lines("go_terms.txt")


def rank_keywords(comments: Sequence[str], vocabulary: Iterable[str], n: int = 30) -> list[str]:
    """Top ``n`` vocabulary terms by document frequency, ties broken alphabetically."""
    if n < 1:
        raise ValueError("n must be >= 1")
    vocab = sorted(set(vocabulary))
    if not vocab:
        raise ValueError("vocabulary is empty")
    df = document_frequencies(comments)
    present = [t for t in vocab if df[t] > 0]
    if len(present) < n:
        raise InsufficientVocabulary(f"only {len(present)} vocabulary terms occur, need {n}")
    present.sort(key=lambda t: (-df[t], t))
    return present[:n]


def keyword_histogram(comments: Sequence[str], vocabulary: Iterable[str], top: int = 10) -> list[tuple[str, int]]:
    """(term, number of comments containing it) for the ``top`` most common terms."""
    df = document_frequencies(comments)
    terms = sorted((t for t in set(vocabulary) if df[t] > 0), key=lambda t: (-df[t], t))
    return [(t, df[t]) for t in terms[:top]]


def select_control_words(
    comments: Sequence[str],
    keywords: Sequence[str],
    n_frequent: int = 30,
    stop: Optional[frozenset[str]] = None,
) -> tuple[list[str], list[str], list[str]]:
    """Choose control words for a corpus.

    Returns ``(function, content, matched)``. The control set is the
    ``n_frequent`` most frequent non-keyword tokens plus, for each keyword in
    descending frequency order, the unused non-keyword token whose document
    frequency is nearest to it (ties: lower frequency, then alphabetical).
    ``matched`` lists that second set in keyword order. The union is split
    into function words (stopwords) and content words.
    """
    stop = stopwords() if stop is None else stop
    df = document_frequencies(comments)
    kw = set(keywords)
    candidates = sorted((t for t in df if t not in kw), key=lambda t: (-df[t], t))
    needed = n_frequent + len(keywords)
    if len(candidates) < needed:
        raise ControlSelectionError(
            f"corpus has {len(candidates)} non-keyword tokens, need {needed} "
            f"({n_frequent} frequent + {len(keywords)} frequency-matched)"
        )
    frequent = candidates[:n_frequent]
    used = set(frequent)
    pool = candidates[n_frequent:]
    matched = []
    for k in sorted(keywords, key=lambda t: (-df[t], t)):
        target = df[k]
        best = min(
            (t for t in pool if t not in used),
            key=lambda t: (abs(df[t] - target), df[t], t),
        )
        used.add(best)
        matched.append(best)
    controls = frequent + matched
    function = [t for t in controls if t in stop]
    content = [t for t in controls if t not in stop]
    return function, content, matched


@dataclass(frozen=True)
class Vocabulary:
    keywords: tuple[str, ...]
    control_function: tuple[str, ...]
    control_content: tuple[str, ...]
    matched: tuple[str, ...] = ()

    def __post_init__(self):
        groups = (self.keywords, self.control_function, self.control_content)
        flat = [t for g in groups for t in g]
        if len(set(flat)) != len(flat):
            raise ValueError("keyword and control lists must be pairwise disjoint")
        controls = set(self.control_function) | set(self.control_content)
        if not set(self.matched) <= controls:
            raise ValueError("matched controls must be drawn from the control lists")
        if self.matched and len(self.matched) != len(self.keywords):
            raise ValueError("need one matched control per keyword")

    @property
    def terms(self) -> tuple[str, ...]:
        """All terms in feature order: keywords, function, content."""
        return self.keywords + self.control_function + self.control_content

    @property
    def classes(self) -> tuple[str, ...]:
        return (
            ("keyword",) * len(self.keywords)
            + ("function",) * len(self.control_function)
            + ("content",) * len(self.control_content)
        )

    def dumps(self) -> str:
        parts = []
        for name in SECTIONS:
            terms = getattr(self, name)
            if name == "matched" and not terms:
                continue
            parts.append(f"[{name}]\n" + "".join(t + "\n" for t in terms))
        return "\n".join(parts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        sections: dict[str, list[str]] = {}
        current = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in SECTIONS:
                    raise DataError(f"vocabulary line {lineno}: unknown section {current!r}")
                sections.setdefault(current, [])
                continue
            if current is None:
                raise DataError(f"vocabulary line {lineno}: term before any section header")
            sections[current].append(line.lower())
        for name in SECTIONS[:3]:
            if name not in sections:
                raise DataError(f"vocabulary missing [{name}] section")
        try:
            return cls(*(tuple(sections.get(name, ())) for name in SECTIONS))
        except ValueError as e:
            raise DataError(f"invalid vocabulary: {e}") from e

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Vocabulary":
        if path is None:
            return default_vocabulary()
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def default_vocabulary() -> Vocabulary:
    text = resources.files("goprobe.data").joinpath("vocabulary.txt").read_text(encoding="utf-8")
    return Vocabulary.loads(text)


@dataclass(frozen=True)
class KeywordFeatures:
    bits: tuple[int, ...]
    comment_ref: tuple[int, int] = (0, 0)


def extract_keyword_features(
    comment: Optional[str], vocab: Vocabulary, comment_ref: tuple[int, int] = (0, 0)
) -> KeywordFeatures:
    tokens = set(tokenize(comment or ""))
    return KeywordFeatures(tuple(int(t in tokens) for t in vocab.terms), comment_ref)
