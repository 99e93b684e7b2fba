"""Board -> binary input planes.

Two layouts, both from the perspective of the player to move:

``planes7``
    0-2: own stones whose group has 1, 2, >=3 liberties;
    3-5: opponent stones binned the same way; 6: ko point.
``planes17``
    for t = 0..7 (t=0 current, t steps back otherwise): plane 2t own stones,
    plane 2t+1 opponent stones, "own" meaning the player to move now;
    plane 16 all ones when Black is to move, zeros otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .goban import BLACK, EMPTY, Board, Color, IllegalMove, Move, chain, neighbor_table, place_stone

PLANES = {"planes7": 7, "planes17": 17}
HISTORY = 8


class HistoryOrderError(DataError):
    pass


@dataclass(frozen=True)
class PlaneStack:
    planes: np.ndarray  # (P, size, size) uint8
    format_tag: str
    perspective: Color


def liberty_planes(board: Board) -> np.ndarray:
    """(2, 3, n, n) stones by colour (black, white) and liberty bin (1, 2, >=3)."""
    n = board.size
    out = np.zeros((2, 3, n * n), dtype=np.uint8)
    nbrs = neighbor_table(n)
    seen: set[int] = set()
    for i, v in enumerate(board.cells):
        if v == EMPTY or i in seen:
            continue
        stones, libs = chain(board.cells, nbrs, i)
        seen |= stones
        b = min(len(libs), 3) - 1
        out[v - 1, b, list(stones)] = 1
    return out.reshape(2, 3, n, n)


def encode_planes7(board: Board) -> PlaneStack:
    n = board.size
    lp = liberty_planes(board)
    own = 0 if board.to_move == BLACK else 1
    planes = np.zeros((7, n, n), dtype=np.uint8)
    planes[0:3] = lp[own]
    planes[3:6] = lp[1 - own]
    if board.ko_point is not None:
        planes[6][board.ko_point] = 1
    return PlaneStack(planes, "planes7", board.to_move)


def _stones(board: Board, color: int) -> np.ndarray:
    return (np.asarray(board.cells, dtype=np.uint8) == color).reshape(board.size, board.size)


def _follows(prev: Board, nxt: Board) -> bool:
    """True if one move (or pass) turns ``prev`` into ``nxt``."""
    if nxt.move_number != prev.move_number + 1 or nxt.size != prev.size:
        return False
    added = [i for i, (a, b) in enumerate(zip(prev.cells, nxt.cells)) if a == EMPTY and b != EMPTY]
    if not added:
        candidate = Move.pass_(nxt.to_move.opponent)
    elif len(added) == 1:
        i = added[0]
        candidate = Move(Color(nxt.cells[i]), divmod(i, prev.size))
    else:
        return False
    try:
        return place_stone(prev, candidate) == nxt
    except IllegalMove:
        return False


def encode_planes17(history: Sequence[Board], current: Board) -> PlaneStack:
    """Encode ``current`` with up to seven preceding boards (most recent last)."""
    history = list(history)[-(HISTORY - 1):] if history else []
    chain_ = history + [current]
    for a, b in zip(chain_, chain_[1:]):
        if not _follows(a, b):
            raise HistoryOrderError(
                f"board at move {b.move_number} does not follow board at move {a.move_number}"
            )
    n = current.size
    own = int(current.to_move)
    planes = np.zeros((17, n, n), dtype=np.uint8)
    for t, board in enumerate(reversed(chain_)):
        planes[2 * t] = _stones(board, own)
        planes[2 * t + 1] = _stones(board, 3 - own)
    if current.to_move == BLACK:
        planes[16] = 1
    return PlaneStack(planes, "planes17", current.to_move)


def encode_game(boards: Sequence[Board], fmt: str) -> np.ndarray:
    """Encode every board of a replayed game: (len(boards), P, n, n) uint8.

    ``boards`` must be consecutive (initial board first) when ``fmt`` is
    ``planes17``.
    """
    if fmt not in PLANES:
        raise ValueError(f"unknown plane format {fmt!r}")
    out = []
    for i, b in enumerate(boards):
        if fmt == "planes7":
            out.append(encode_planes7(b).planes)
        else:
            out.append(encode_planes17(boards[max(0, i - HISTORY + 1):i], b).planes)
    return np.stack(out) if out else np.zeros((0, PLANES[fmt], 0, 0), dtype=np.uint8)
