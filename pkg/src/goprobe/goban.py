"""Go rules engine: placement, capture, liberties and simple ko.

Boards are immutable values. Cells are stored as a flat tuple indexed
``row * size + col`` holding ``EMPTY``, ``BLACK`` or ``WHITE``. Coordinates
exposed to callers are ``(row, col)`` pairs, zero-based, row 0 at the top.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .errors import DataError

EMPTY = 0
MIN_SIZE = 2
MAX_SIZE = 25

Point = tuple[int, int]


class Color(IntEnum):
    BLACK = 1
    WHITE = 2

    @property
    def opponent(self) -> "Color":
        return Color(3 - self)

    @property
    def letter(self) -> str:
        return "B" if self is Color.BLACK else "W"

    @classmethod
    def from_letter(cls, letter: str) -> "Color":
        try:
            return {"B": cls.BLACK, "W": cls.WHITE}[letter.upper()]
        except KeyError:
            raise ValueError(f"not a color: {letter!r}") from None


BLACK = Color.BLACK
WHITE = Color.WHITE


class IllegalMove(DataError):
    """A move that the rules forbid. ``reason`` is one of
    ``occupied``, ``suicide``, ``ko`` or ``out-of-bounds``."""

    def __init__(self, reason: str, move: "Move | None" = None):
        self.reason = reason
        self.move = move
        super().__init__(f"illegal move {move}: {reason}" if move else f"illegal move: {reason}")


class OutOfBounds(IndexError):
    pass


@dataclass(frozen=True)
class Move:
    color: Color
    point: Optional[Point] = None

    @classmethod
    def play(cls, color: Color, row: int, col: int) -> "Move":
        return cls(Color(color), (row, col))

    @classmethod
    def pass_(cls, color: Color) -> "Move":
        return cls(Color(color), None)

    @property
    def is_pass(self) -> bool:
        return self.point is None

    def __str__(self) -> str:
        where = "pass" if self.point is None else f"{self.point[0]},{self.point[1]}"
        return f"{self.color.letter}[{where}]"


class Group(NamedTuple):
    color: Color
    stones: frozenset[Point]
    liberties: frozenset[Point]


@lru_cache(maxsize=None)
def neighbor_table(size: int) -> tuple[tuple[int, ...], ...]:
    """Orthogonal neighbours of every flat index on a ``size`` board."""
    table = []
    for r in range(size):
        for c in range(size):
            nbrs = []
            if r > 0:
                nbrs.append((r - 1) * size + c)
            if r < size - 1:
                nbrs.append((r + 1) * size + c)
            if c > 0:
                nbrs.append(r * size + c - 1)
            if c < size - 1:
                nbrs.append(r * size + c + 1)
            table.append(tuple(nbrs))
    return tuple(table)


def chain(cells: tuple[int, ...] | list[int], nbrs, start: int) -> tuple[set[int], set[int]]:
    """Flood-fill the chain through flat index ``start``: (stones, liberties)."""
    color = cells[start]
    stones = {start}
    libs: set[int] = set()
    stack = [start]
    while stack:
        p = stack.pop()
        for q in nbrs[p]:
            v = cells[q]
            if v == EMPTY:
                libs.add(q)
            elif v == color and q not in stones:
                stones.add(q)
                stack.append(q)
    return stones, libs


@dataclass(frozen=True)
class Board:
    size: int
    cells: tuple[int, ...]
    to_move: Color = BLACK
    ko_point: Optional[Point] = None
    move_number: int = 0
    # stones captured by (black, white)
    captures: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not MIN_SIZE <= self.size <= MAX_SIZE:
            raise ValueError(f"board size must be in [{MIN_SIZE}, {MAX_SIZE}], got {self.size}")
        if len(self.cells) != self.size * self.size:
            raise ValueError("cell count does not match board size")

    @classmethod
    def empty(cls, size: int = 19) -> "Board":
        return cls(size, (EMPTY,) * (size * size))

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[str],
        to_move: Color = BLACK,
        ko_point: Optional[Point] = None,
        move_number: int = 0,
    ) -> "Board":
        """Build a board from text rows using ``X`` (black), ``O`` (white) and ``.``.

        Whitespace inside rows is ignored. Raises ``ValueError`` when the
        position contains a group without liberties.
        """
        if isinstance(rows, str):
            rows = rows.strip().splitlines()
        lines = ["".join(r.split()) for r in rows]
        lines = [ln for ln in lines if ln]
        size = len(lines)
        symbols = {".": EMPTY, "+": EMPTY, "X": BLACK, "x": BLACK, "#": BLACK, "O": WHITE, "o": WHITE}
        cells = []
        for ln in lines:
            if len(ln) != size:
                raise ValueError("board rows must form a square")
            cells.extend(int(symbols[ch]) for ch in ln)
        board = cls(size, tuple(cells), Color(to_move), ko_point, move_number)
        board.validate()
        return board

    def __getitem__(self, point: Point) -> int:
        r, c = point
        if not (0 <= r < self.size and 0 <= c < self.size):
            raise OutOfBounds(point)
        return self.cells[r * self.size + c]

    def in_bounds(self, point: Point) -> bool:
        return 0 <= point[0] < self.size and 0 <= point[1] < self.size

    @property
    def grid(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.int8).reshape(self.size, self.size)

    def stones(self, color: Color) -> Iterator[Point]:
        n = self.size
        for i, v in enumerate(self.cells):
            if v == color:
                yield divmod(i, n)

    def stone_count(self) -> int:
        return sum(1 for v in self.cells if v != EMPTY)

    def groups(self) -> list[Group]:
        """All groups on the board in row-major order of their first stone."""
        nbrs = neighbor_table(self.size)
        seen: set[int] = set()
        out = []
        for i, v in enumerate(self.cells):
            if v == EMPTY or i in seen:
                continue
            stones, libs = chain(self.cells, nbrs, i)
            seen |= stones
            out.append(self._group(Color(v), stones, libs))
        return out

    def _group(self, color: Color, stones: set[int], libs: set[int]) -> Group:
        n = self.size
        return Group(
            color,
            frozenset(divmod(p, n) for p in stones),
            frozenset(divmod(p, n) for p in libs),
        )

    def validate(self) -> None:
        """Raise ``ValueError`` if any board invariant is violated."""
        for g in self.groups():
            if not g.liberties:
                raise ValueError(f"group at {min(g.stones)} has no liberties")
        if self.ko_point is not None:
            if not self.in_bounds(self.ko_point) or self[self.ko_point] != EMPTY:
                raise ValueError("ko point must be an empty on-board cell")

    def setup(self, black: Iterable[Point] = (), white: Iterable[Point] = ()) -> "Board":
        """Return a copy with setup stones added (no captures are resolved)."""
        cells = list(self.cells)
        n = self.size
        for color, points in ((BLACK, black), (WHITE, white)):
            for p in points:
                if not self.in_bounds(p):
                    raise OutOfBounds(p)
                cells[p[0] * n + p[1]] = int(color)
        board = replace(self, cells=tuple(cells), ko_point=None)
        board.validate()
        return board

    def swap_colors(self) -> "Board":
        """Exchange the colours of every stone and of the player to move."""
        cells = tuple(0 if v == EMPTY else 3 - v for v in self.cells)
        return replace(
            self,
            cells=cells,
            to_move=self.to_move.opponent,
            captures=(self.captures[1], self.captures[0]),
        )

    def transform(self, k: int) -> "Board":
        """Apply dihedral symmetry ``k`` (0..7), see :func:`transform_point`."""
        n = self.size
        cells = [EMPTY] * (n * n)
        for i, v in enumerate(self.cells):
            r, c = transform_point(divmod(i, n), n, k)
            cells[r * n + c] = v
        ko = None if self.ko_point is None else transform_point(self.ko_point, n, k)
        return replace(self, cells=tuple(cells), ko_point=ko)

    def play(self, move: Move) -> "Board":
        return place_stone(self, move)

    def __str__(self) -> str:
        sym = {EMPTY: ".", BLACK: "X", WHITE: "O"}
        n = self.size
        return "\n".join(
            "".join(sym[self.cells[r * n + c]] for c in range(n)) for r in range(n)
        )


def transform_point(point: Point, size: int, k: int) -> Point:
    """Map ``point`` through dihedral symmetry ``k``.

    ``k & 4`` transposes, then ``k & 1`` flips rows and ``k & 2`` flips columns.
    """
    r, c = point
    if k & 4:
        r, c = c, r
    if k & 1:
        r = size - 1 - r
    if k & 2:
        c = size - 1 - c
    return r, c


def place_stone(board: Board, move: Move) -> Board:
    """Play ``move`` and return the resulting board.

    The mover's colour is taken from the move itself, so records containing
    two consecutive moves by one player can still be replayed.
    """
    if move.point is None:
        return replace(
            board,
            to_move=move.color.opponent,
            ko_point=None,
            move_number=board.move_number + 1,
        )
    r, c = move.point
    n = board.size
    if not (0 <= r < n and 0 <= c < n):
        raise IllegalMove("out-of-bounds", move)
    idx = r * n + c
    if board.cells[idx] != EMPTY:
        raise IllegalMove("occupied", move)
    if board.ko_point == move.point:
        raise IllegalMove("ko", move)

    nbrs = neighbor_table(n)
    color = int(move.color)
    enemy = 3 - color
    cells = list(board.cells)
    cells[idx] = color
    captured: list[int] = []
    checked: set[int] = set()
    for q in nbrs[idx]:
        if cells[q] == enemy and q not in checked:
            stones, libs = chain(cells, nbrs, q)
            checked |= stones
            if not libs:
                captured.extend(stones)
    for q in captured:
        cells[q] = EMPTY
    stones, libs = chain(cells, nbrs, idx)
    if not libs:
        raise IllegalMove("suicide", move)

    ko = None
    if len(captured) == 1 and len(stones) == 1 and libs == {captured[0]}:
        ko = divmod(captured[0], n)
    caps = list(board.captures)
    caps[color - 1] += len(captured)
    return Board(
        n,
        tuple(cells),
        move.color.opponent,
        ko,
        board.move_number + 1,
        (caps[0], caps[1]),
    )


def is_legal(board: Board, move: Move) -> bool:
    try:
        place_stone(board, move)
    except IllegalMove:
        return False
    return True


def group_at(board: Board, point: Point) -> Optional[Group]:
    """The maximal group through ``point`` with its liberties, or ``None``."""
    if not board.in_bounds(point):
        raise OutOfBounds(point)
    idx = point[0] * board.size + point[1]
    v = board.cells[idx]
    if v == EMPTY:
        return None
    stones, libs = chain(board.cells, neighbor_table(board.size), idx)
    return board._group(Color(v), stones, libs)


def legal_moves(board: Board) -> set[Move]:
    """Every legal play for the side to move, plus a pass."""
    n = board.size
    nbrs = neighbor_table(n)
    cells = board.cells
    color = int(board.to_move)
    enemy = 3 - color
    ko = None if board.ko_point is None else board.ko_point[0] * n + board.ko_point[1]

    # Liberty counts per chain, computed once.
    lib_count: dict[int, int] = {}
    chain_of: dict[int, int] = {}
    for i, v in enumerate(cells):
        if v != EMPTY and i not in chain_of:
            stones, libs = chain(cells, nbrs, i)
            for s in stones:
                chain_of[s] = i
            lib_count[i] = len(libs)

    moves = {Move.pass_(board.to_move)}
    for i, v in enumerate(cells):
        if v != EMPTY or i == ko:
            continue
        ok = False
        for q in nbrs[i]:
            w = cells[q]
            if w == EMPTY:
                ok = True
            elif w == color and lib_count[chain_of[q]] > 1:
                ok = True
            elif w == enemy and lib_count[chain_of[q]] == 1:
                ok = True
            if ok:
                break
        if ok:
            moves.add(Move(board.to_move, divmod(i, n)))
    return moves
