"""Binary feature matrix: pattern flags of the board plus keyword/control bits of the comment."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .patterns import PATTERN_NAMES, extract_pattern_features
from .sgf import GameRecord
from .text import Vocabulary, tokenize

FEATURE_CLASSES = ("pattern", "keyword", "function", "content")
KEY_COLUMNS = ("game_id", "move_index")


@dataclass
class FeatureMatrix:
    """Rows are positions keyed by (game id, move index); columns are 0/1 features.

    Column names carry their class as a prefix, e.g. ``pattern.cut`` or
    ``keyword.cut``, so a term and a pattern may share a word.
    """

    names: list[str]
    keys: np.ndarray  # (N, 2) int64
    values: np.ndarray  # (N, F) uint8

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.uint8).reshape(len(self.keys), len(self.names))
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate feature names")
        for name in self.names:
            if feature_class(name) not in FEATURE_CLASSES:
                raise DataError(f"feature {name!r} has no known class prefix")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def classes(self) -> list[str]:
        return [feature_class(n) for n in self.names]

    @property
    def games(self) -> np.ndarray:
        return self.keys[:, 0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select_features(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(list(names), self.keys, self.values[:, idx])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow([*KEY_COLUMNS, *self.names])
            for key, row in zip(self.keys.tolist(), self.values.tolist()):
                w.writerow([*key, *row])

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
        if not rows or tuple(rows[0][:2]) != KEY_COLUMNS:
            raise DataError(f"{path}: header must start with game_id,move_index")
        names = rows[0][2:]
        keys, values = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(names) + 2:
                raise DataError(f"{path}:{lineno}: expected {len(names) + 2} columns, got {len(row)}")
            try:
                keys.append((int(row[0]), int(row[1])))
                bits = [int(v) for v in row[2:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer value") from None
            if any(b not in (0, 1) for b in bits):
                raise DataError(f"{path}:{lineno}: feature values must be 0 or 1")
            values.append(bits)
        return cls(names, np.array(keys, dtype=np.int64).reshape(-1, 2), np.array(values, dtype=np.uint8).reshape(len(keys), len(names)))


def feature_class(name: str) -> str:
    return name.split(".", 1)[0]


def feature_names(vocab: Vocabulary, classes: Iterable[str] = FEATURE_CLASSES) -> list[str]:
    classes = set(classes)
    unknown = classes - set(FEATURE_CLASSES)
    if unknown:
        raise ValueError(f"unknown feature classes: {sorted(unknown)}")
    names = [f"pattern.{p}" for p in PATTERN_NAMES] if "pattern" in classes else []
    names += [f"{c}.{t}" for t, c in zip(vocab.terms, vocab.classes) if c in classes]
    return names


def build_feature_matrix(
    records: Sequence[GameRecord],
    vocab: Vocabulary,
    classes: Iterable[str] = FEATURE_CLASSES,
    commented_only: bool = True,
    cut_mode: str = "point",
) -> FeatureMatrix:
    """One row per mainline position (only commented ones by default).

    Pattern features describe the board after the move; term features are
    presence of the term among the comment's tokens.
    """
    names = feature_names(vocab, classes)
    with_patterns = names[:1] == ["pattern.cut"]
    terms = [n.split(".", 1)[1] for n in names if feature_class(n) != "pattern"]
    keys, rows = [], []
    for rec in records:
        for pos in rec.mainline:
            if commented_only and not pos.comment:
                continue
            row: list[int] = []
            if with_patterns:
                row += [int(v) for v in extract_pattern_features(pos.board_after, cut_mode).as_tuple()]
            tokens = set(tokenize(pos.comment or ""))
            row += [int(t in tokens) for t in terms]
            keys.append((rec.game_id, pos.move_index))
            rows.append(row)
    return FeatureMatrix(
        names,
        np.array(keys, dtype=np.int64).reshape(-1, 2),
        np.array(rows, dtype=np.uint8).reshape(len(keys), len(names)),
    )


def degenerate_features(fm: FeatureMatrix) -> list[str]:
    """Features that take a single value over every row."""
    v = fm.values
    if len(v) == 0:
        return list(fm.names)
    const = (v.min(axis=0) == v.max(axis=0))
    return [n for n, c in zip(fm.names, const) if c]

