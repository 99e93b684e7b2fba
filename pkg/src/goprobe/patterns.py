"""Rule-based detectors for cuts, eyes, ladders and walls.

All detectors are turn-agnostic: they ask what *would* happen if a stone of
the given colour were placed, resolving captures but ignoring whose turn it is
and the ko point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .goban import EMPTY, Board, Color, Point, chain, neighbor_table


class Wall(NamedTuple):
    color: Color
    start: Point
    end: Point

    @property
    def length(self) -> int:
        return max(self.end[0] - self.start[0], self.end[1] - self.start[1]) + 1


class _Analysis:
    """Chains of a board indexed by flat cell: label per cell, stones/libs per chain."""

    def __init__(self, board: Board):
        self.board = board
        self.n = board.size
        self.nbrs = neighbor_table(board.size)
        self.label = [-1] * (self.n * self.n)
        self.stones: list[set[int]] = []
        self.libs: list[set[int]] = []
        self.color: list[int] = []
        cells = board.cells
        for i, v in enumerate(cells):
            if v == EMPTY or self.label[i] >= 0:
                continue
            stones, libs = chain(cells, self.nbrs, i)
            gid = len(self.stones)
            for s in stones:
                self.label[s] = gid
            self.stones.append(stones)
            self.libs.append(libs)
            self.color.append(v)

    def adjacent_chains(self, idx: int, color: int) -> set[int]:
        return {self.label[q] for q in self.nbrs[idx] if self.board.cells[q] == color}

    def placement(self, idx: int, color: int) -> tuple[set[int], set[int]]:
        """Stones and liberties of the chain formed by placing ``color`` at ``idx``."""
        cells = self.board.cells
        enemy = 3 - color
        friends = self.adjacent_chains(idx, color)
        stones = {idx}
        libs: set[int] = set()
        for g in friends:
            stones |= self.stones[g]
            libs |= self.libs[g]
        libs.update(q for q in self.nbrs[idx] if cells[q] == EMPTY)
        libs.discard(idx)
        captured: set[int] = set()
        for g in self.adjacent_chains(idx, enemy):
            if self.libs[g] == {idx}:
                captured |= self.stones[g]
        if captured:
            for s in stones:
                for q in self.nbrs[s]:
                    if q in captured:
                        libs.add(q)
        return stones, libs


def _point(idx: int, n: int) -> Point:
    return divmod(idx, n)


def detect_cut_points(board: Board, color: Color) -> set[Point]:
    """Empty points where ``color`` can stop the opponent joining two of its groups.

    A point qualifies when an opponent stone there would join at least two
    currently separate opponent groups, and a ``color`` stone there would end
    up (after captures) in a group with at least two liberties.
    """
    a = _Analysis(board)
    color = int(color)
    enemy = 3 - color
    out = set()
    for idx, v in enumerate(board.cells):
        if v != EMPTY:
            continue
        if len(a.adjacent_chains(idx, enemy)) < 2:
            continue
        _, libs = a.placement(idx, color)
        if len(libs) >= 2:
            out.add(_point(idx, a.n))
    return out


def detect_cutting_stones(board: Board, color: Color) -> set[Point]:
    """Alternative cut reading: existing ``color`` stones that separate two
    opponent groups, in a group with at least two liberties."""
    a = _Analysis(board)
    color = int(color)
    enemy = 3 - color
    out = set()
    for idx, v in enumerate(board.cells):
        if v != color:
            continue
        if len(a.adjacent_chains(idx, enemy)) >= 2 and len(a.libs[a.label[idx]]) >= 2:
            out.add(_point(idx, a.n))
    return out


def empty_regions(board: Board) -> list[tuple[frozenset[int], set[int]]]:
    """Orthogonally connected empty regions with the set of bordering colours."""
    nbrs = neighbor_table(board.size)
    cells = board.cells
    seen: set[int] = set()
    regions = []
    for i, v in enumerate(cells):
        if v != EMPTY or i in seen:
            continue
        region = {i}
        border: set[int] = set()
        stack = [i]
        while stack:
            p = stack.pop()
            for q in nbrs[p]:
                w = cells[q]
                if w == EMPTY:
                    if q not in region:
                        region.add(q)
                        stack.append(q)
                else:
                    border.add(w)
        seen |= region
        regions.append((frozenset(region), border))
    return regions


def detect_eyes(board: Board, color: Color) -> set[frozenset[Point]]:
    """Empty regions bordered only by ``color`` stones (the board edge is neutral)."""
    n = board.size
    return {
        frozenset(_point(i, n) for i in region)
        for region, border in empty_regions(board)
        if border == {int(color)}
    }


def detect_ladder_moves(board: Board, color: Color) -> set[Point]:
    """Liberties that extend a ``color`` group out of atari to exactly two liberties.

    The point must be the only liberty of some ``color`` group, and must not
    lie on the first line.
    """
    a = _Analysis(board)
    n = a.n
    color = int(color)
    out = set()
    for gid, libs in enumerate(a.libs):
        if a.color[gid] != color or len(libs) != 1:
            continue
        (idx,) = libs
        r, c = divmod(idx, n)
        if r in (0, n - 1) or c in (0, n - 1):
            continue
        _, new_libs = a.placement(idx, color)
        if len(new_libs) == 2:
            out.add((r, c))
    return out


def detect_walls(board: Board, color: Color, min_length: int = 4) -> set[Wall]:
    """Maximal horizontal or vertical runs of at least ``min_length`` stones."""
    n = board.size
    cells = board.cells
    color = Color(color)
    out = set()
    for horizontal in (True, False):
        for line in range(n):
            run_start = None
            for pos in range(n + 1):
                if pos < n:
                    idx = line * n + pos if horizontal else pos * n + line
                    hit = cells[idx] == color
                else:
                    hit = False
                if hit and run_start is None:
                    run_start = pos
                elif not hit and run_start is not None:
                    if pos - run_start >= min_length:
                        if horizontal:
                            out.add(Wall(color, (line, run_start), (line, pos - 1)))
                        else:
                            out.add(Wall(color, (run_start, line), (pos - 1, line)))
                    run_start = None
    return out


PATTERN_NAMES = ("cut", "eye", "ladder", "wall")


class PatternFlags(NamedTuple):
    cut: bool = False
    eye: bool = False
    ladder: bool = False
    wall: bool = False


@dataclass(frozen=True)
class PatternFeatures:
    black: PatternFlags
    white: PatternFlags

    @property
    def cut(self) -> bool:
        return self.black.cut or self.white.cut

    @property
    def eye(self) -> bool:
        return self.black.eye or self.white.eye

    @property
    def ladder(self) -> bool:
        return self.black.ladder or self.white.ladder

    @property
    def wall(self) -> bool:
        return self.black.wall or self.white.wall

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.cut, self.eye, self.ladder, self.wall)

    def as_dict(self) -> dict[str, bool]:
        return dict(zip(PATTERN_NAMES, self.as_tuple()))


def _flags(board: Board, color: Color, cut_mode: str) -> PatternFlags:
    if cut_mode == "point":
        cut = bool(detect_cut_points(board, color))
    elif cut_mode == "stone":
        cut = bool(detect_cutting_stones(board, color))
    else:
        raise ValueError(f"unknown cut_mode {cut_mode!r}")
    return PatternFlags(
        cut=cut,
        eye=bool(detect_eyes(board, color)),
        ladder=bool(detect_ladder_moves(board, color)),
        wall=bool(detect_walls(board, color)),
    )


def extract_pattern_features(board: Board, cut_mode: str = "point") -> PatternFeatures:
    """Presence of each pattern anywhere on the board, per colour.

    ``cut_mode="point"`` marks available cut points; ``"stone"`` marks stones
    already cutting (see :func:`detect_cutting_stones`).
    """
    return PatternFeatures(
        black=_flags(board, Color.BLACK, cut_mode),
        white=_flags(board, Color.WHITE, cut_mode),
    )
