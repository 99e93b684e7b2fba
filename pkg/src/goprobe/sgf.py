"""SGF game-record parsing and mainline extraction.

The parser works on raw bytes so that errors can carry byte offsets; property
values are decoded with the encoding named by the ``CA`` property (Latin-1
when absent). Only the first child is followed when a game is replayed;
variations are kept in the tree but never reach a :class:`GameRecord`.
"""

from __future__ import annotations

import codecs
import json
import logging
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import DataError
from .goban import MAX_SIZE, MIN_SIZE, Board, Color, IllegalMove, Move, Point, place_stone
from .text import tokenize

log = logging.getLogger(__name__)

DEFAULT_ENCODING = "latin-1"
HONORED_METADATA = ("PB", "PW", "BR", "WR", "RE", "HA")


class ParseError(DataError):
    def __init__(self, offset: int, reason: str):
        self.offset = offset
        self.reason = reason
        super().__init__(f"SGF parse error at byte {offset}: {reason}")


class IllegalGame(DataError):
    def __init__(self, move_index: int, reason: str):
        self.move_index = move_index
        self.reason = reason
        super().__init__(f"illegal game at move {move_index}: {reason}")


@dataclass
class GameTree:
    """One parenthesised SGF game tree: a node sequence plus sub-trees.

    Each node is a mapping from property identifier to its list of values.
    """

    nodes: list[dict[str, list[str]]] = field(default_factory=list)
    children: list["GameTree"] = field(default_factory=list)

    @property
    def root(self) -> dict[str, list[str]]:
        return self.nodes[0]

    def mainline_nodes(self) -> list[dict[str, list[str]]]:
        out = []
        tree: Optional[GameTree] = self
        while tree is not None:
            out.extend(tree.nodes)
            tree = tree.children[0] if tree.children else None
        return out

    def variation_count(self) -> int:
        """Number of side branches anywhere in the tree."""
        count = 0
        stack = [self]
        while stack:
            t = stack.pop()
            count += max(0, len(t.children) - 1)
            stack.extend(t.children)
        return count


# -- parsing ----------------------------------------------------------------

_CA_RE = re.compile(rb"CA\s*\[([^\]]*)\]")
_WS = b" \t\r\n\x0b\x0c"


def detect_encoding(data: bytes) -> str:
    m = _CA_RE.search(data)
    if m:
        name = m.group(1).decode("ascii", "replace").strip()
        try:
            return codecs.lookup(name).name
        except LookupError:
            log.warning("unknown SGF charset %r, falling back to %s", name, DEFAULT_ENCODING)
    return DEFAULT_ENCODING


def _unescape(raw: bytes) -> bytes:
    out = bytearray()
    i = 0
    n = len(raw)
    while i < n:
        b = raw[i]
        if b == 0x5C and i + 1 < n:  # backslash
            nxt = raw[i + 1]
            if nxt in (0x0A, 0x0D):
                # soft line break: drop backslash and the newline (\n, \r, \r\n, \n\r)
                i += 2
                if i < n and raw[i] in (0x0A, 0x0D) and raw[i] != nxt:
                    i += 1
                continue
            out.append(nxt)
            i += 2
            continue
        if b == 0x5C:
            i += 1
            continue
        out.append(b)
        i += 1
    return bytes(out)


def parse_collection(data: bytes | str) -> list[GameTree]:
    """Parse every game tree in an SGF collection."""
    if isinstance(data, str):
        data = data.encode("utf-8")
        encoding = "utf-8"
    else:
        encoding = detect_encoding(data)

    n = len(data)
    i = data.find(b"(")
    if i < 0:
        raise ParseError(0, "no game tree found")

    trees: list[GameTree] = []
    # stack of (tree, offset of its opening paren)
    stack: list[tuple[GameTree, int]] = []
    while i < n:
        ch = data[i]
        if ch in _WS:
            i += 1
        elif ch == 0x28:  # (
            tree = GameTree()
            if stack:
                parent = stack[-1][0]
                if not parent.nodes:
                    raise ParseError(i, "sub-tree before any node")
                parent.children.append(tree)
            stack.append((tree, i))
            i += 1
        elif ch == 0x29:  # )
            if not stack:
                raise ParseError(i, "unbalanced ')'")
            tree, start = stack.pop()
            if not tree.nodes:
                raise ParseError(start, "empty game tree")
            if not stack:
                trees.append(tree)
                nxt = data.find(b"(", i + 1)
                stray = data.find(b")", i + 1, nxt if nxt >= 0 else n)
                if stray >= 0:
                    raise ParseError(stray, "unbalanced ')'")
                if nxt < 0:
                    break
                i = nxt
                continue
            i += 1
        elif ch == 0x3B:  # ;
            if not stack:
                raise ParseError(i, "node outside game tree")
            tree = stack[-1][0]
            if tree.children:
                raise ParseError(i, "node after sub-trees")
            node: dict[str, list[str]] = {}
            tree.nodes.append(node)
            i = _parse_properties(data, i + 1, node, encoding)
        elif not stack:
            # stray text between top-level trees
            i += 1
        else:
            raise ParseError(i, f"unexpected character {chr(ch)!r}")
    if stack:
        raise ParseError(stack[0][1], "unbalanced '(': game tree never closed")
    return trees


def _parse_properties(data: bytes, i: int, node: dict[str, list[str]], encoding: str) -> int:
    n = len(data)
    while True:
        while i < n and data[i] in _WS:
            i += 1
        if i >= n:
            return i
        ch = data[i]
        if not (0x41 <= ch <= 0x5A or 0x61 <= ch <= 0x7A):
            return i
        start = i
        while i < n and (0x41 <= data[i] <= 0x5A or 0x61 <= data[i] <= 0x7A):
            i += 1
        # FF[3] allowed lowercase letters inside identifiers; they carry no meaning
        ident = bytes(b for b in data[start:i] if 0x41 <= b <= 0x5A).decode("ascii")
        if not ident:
            raise ParseError(start, "property identifier has no uppercase letters")
        values: list[str] = []
        while True:
            while i < n and data[i] in _WS:
                i += 1
            if i >= n or data[i] != 0x5B:  # [
                break
            open_at = i
            i += 1
            vstart = i
            while i < n and data[i] != 0x5D:
                i += 2 if data[i] == 0x5C else 1
            if i >= n:
                raise ParseError(open_at, "missing ']'")
            raw = _unescape(data[vstart:i])
            values.append(raw.decode(encoding, errors="replace"))
            i += 1
        if not values:
            raise ParseError(start, f"property {ident} has no value")
        node.setdefault(ident, []).extend(values)


def parse_sgf(data: bytes | str) -> GameTree:
    """Parse the first game tree of an SGF file."""
    return parse_collection(data)[0]


def _escape(value: str) -> str:
    return value.replace("\\", "\\\\").replace("]", "\\]")


def serialize_sgf(tree: GameTree) -> str:
    """Render a tree as SGF text; ``parse_sgf`` of the result equals ``tree``."""
    parts: list[str] = []
    # iterative to cope with deeply nested variation trees
    stack: list[object] = [tree]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            parts.append(item)
            continue
        assert isinstance(item, GameTree)
        parts.append("(")
        for node in item.nodes:
            parts.append(";")
            for ident, values in node.items():
                parts.append(ident)
                parts.extend(f"[{_escape(v)}]" for v in values)
        stack.append(")")
        stack.extend(reversed(item.children))
    return "".join(parts)


# -- game records -----------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedPosition:
    move: Move
    comment: Optional[str]
    board_after: Board
    move_index: int


@dataclass
class GameRecord:
    game_id: int
    board_size: int
    handicap_setup: list[tuple[Color, Point]]
    mainline: list[AnnotatedPosition]
    metadata: dict[str, str] = field(default_factory=dict)
    root_comment: Optional[str] = None
    variations: int = 0
    source: str = ""

    @property
    def initial_board(self) -> Board:
        return _setup_board(self.board_size, self.handicap_setup, self._first_mover())

    def _first_mover(self) -> Color:
        return self.mainline[0].move.color if self.mainline else Color.BLACK

    def comments(self) -> Iterator[tuple[int, str]]:
        """(move_index, text) for every comment, root comment first as index 0."""
        if self.root_comment:
            yield 0, self.root_comment
        for pos in self.mainline:
            if pos.comment:
                yield pos.move_index, pos.comment

    def boards(self) -> list[Board]:
        """Initial board followed by the board after every mainline move."""
        return [self.initial_board] + [p.board_after for p in self.mainline]

    def to_json(self) -> dict:
        moves = []
        for p in self.mainline:
            if p.move.is_pass:
                moves.append([p.move.color.letter, "pass"])
            else:
                moves.append([p.move.color.letter, p.move.point[0], p.move.point[1]])
        comments = {str(i): text for i, text in self.comments()}
        return {
            "game_id": self.game_id,
            "source": self.source,
            "size": self.board_size,
            "setup": [[c.letter, p[0], p[1]] for c, p in self.handicap_setup],
            "moves": moves,
            "comments": comments,
            "variations": self.variations,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GameRecord":
        size = int(obj["size"])
        setup = [(Color.from_letter(c), (int(r), int(col))) for c, r, col in obj.get("setup", [])]
        moves = []
        for m in obj["moves"]:
            color = Color.from_letter(m[0])
            moves.append(Move.pass_(color) if m[1] == "pass" else Move.play(color, int(m[1]), int(m[2])))
        comments = {int(k): v for k, v in obj.get("comments", {}).items()}
        first = moves[0].color if moves else Color.BLACK
        board = _setup_board(size, setup, first)
        mainline = []
        for i, move in enumerate(moves, start=1):
            try:
                board = place_stone(board, move)
            except IllegalMove as e:
                raise IllegalGame(i, e.reason) from e
            mainline.append(AnnotatedPosition(move, comments.get(i), board, i))
        return cls(
            game_id=int(obj["game_id"]),
            board_size=size,
            handicap_setup=setup,
            mainline=mainline,
            metadata=dict(obj.get("metadata", {})),
            root_comment=comments.get(0),
            variations=int(obj.get("variations", 0)),
            source=obj.get("source", ""),
        )


def _setup_board(size: int, setup: list[tuple[Color, Point]], to_move: Color) -> Board:
    board = Board.empty(size)
    if setup:
        try:
            board = board.setup(
                black=[p for c, p in setup if c == Color.BLACK],
                white=[p for c, p in setup if c == Color.WHITE],
            )
        except (ValueError, IndexError) as e:
            raise IllegalGame(0, f"bad setup stones: {e}") from e
    return Board(size, board.cells, to_move)


def _sgf_point(value: str, size: int, move_index: int) -> Optional[Point]:
    """Decode an SGF point; ``None`` means pass."""
    value = value.strip()
    if value == "" or (value == "tt" and size <= 19):
        return None
    if len(value) != 2 or not value.isalpha() or not value.islower():
        raise IllegalGame(move_index, f"malformed point {value!r}")
    col = ord(value[0]) - ord("a")
    row = ord(value[1]) - ord("a")
    if not (0 <= row < size and 0 <= col < size):
        raise IllegalGame(move_index, f"point {value!r} outside {size}x{size} board")
    return row, col


def _board_size(root: dict[str, list[str]]) -> int:
    raw = root.get("SZ", ["19"])[0].strip()
    try:
        if ":" in raw:
            a, b = (int(x) for x in raw.split(":"))
            if a != b:
                raise IllegalGame(0, f"rectangular board {raw}")
            size = a
        else:
            size = int(raw)
    except ValueError:
        raise IllegalGame(0, f"bad SZ value {raw!r}") from None
    if not MIN_SIZE <= size <= MAX_SIZE:
        raise IllegalGame(0, f"board size {size} outside [{MIN_SIZE}, {MAX_SIZE}]")
    return size


def _comment(node: dict[str, list[str]]) -> Optional[str]:
    if "C" not in node:
        return None
    text = "\n".join(node["C"])
    return text if text.strip() else None


def extract_mainline(tree: GameTree, game_id: int = 0, source: str = "") -> GameRecord:
    """Replay the first-child line of ``tree`` into a :class:`GameRecord`.

    Comments on a move node annotate the board after that move. Root comments
    become ``root_comment`` (move index 0). A comment on a later node without
    a move is appended to the preceding position's comment.
    """
    nodes = tree.mainline_nodes()
    root = nodes[0]
    gm = root.get("GM", ["1"])[0].strip()
    if gm not in ("", "1"):
        raise IllegalGame(0, f"not a Go record (GM[{gm}])")
    size = _board_size(root)

    setup: list[tuple[Color, Point]] = []
    for ident, color in (("AB", Color.BLACK), ("AW", Color.WHITE)):
        for v in root.get(ident, []):
            for p in _expand_points(v, size):
                setup.append((color, p))

    first = Color.BLACK
    for node in nodes:
        if "B" in node or "W" in node:
            first = Color.BLACK if "B" in node else Color.WHITE
            break
    board = _setup_board(size, setup, first)

    mainline: list[AnnotatedPosition] = []
    root_comment: Optional[str] = None
    for k, node in enumerate(nodes):
        if k > 0 and any(p in node for p in ("AB", "AW", "AE")):
            raise IllegalGame(len(mainline), "setup stones outside the root node")
        has_b, has_w = "B" in node, "W" in node
        comment = _comment(node)
        if has_b and has_w:
            raise IllegalGame(len(mainline) + 1, "node contains both B and W")
        if not (has_b or has_w):
            if comment is None:
                continue
            if not mainline:
                root_comment = comment if root_comment is None else root_comment + "\n" + comment
            else:
                last = mainline[-1]
                merged = comment if last.comment is None else last.comment + "\n" + comment
                mainline[-1] = AnnotatedPosition(last.move, merged, last.board_after, last.move_index)
            continue
        index = len(mainline) + 1
        ident = "B" if has_b else "W"
        values = node[ident]
        if len(values) != 1:
            raise IllegalGame(index, f"{ident} has {len(values)} values")
        color = Color.from_letter(ident)
        point = _sgf_point(values[0], size, index)
        move = Move(color, point)
        try:
            board = place_stone(board, move)
        except IllegalMove as e:
            raise IllegalGame(index, e.reason) from e
        mainline.append(AnnotatedPosition(move, comment, board, index))

    metadata = {k: root[k][0] for k in HONORED_METADATA if k in root}
    return GameRecord(
        game_id=game_id,
        board_size=size,
        handicap_setup=setup,
        mainline=mainline,
        metadata=metadata,
        root_comment=root_comment,
        variations=tree.variation_count(),
        source=source,
    )


def _expand_points(value: str, size: int) -> list[Point]:
    """Setup values may be single points or ``aa:cc`` rectangles."""
    if ":" in value:
        a, b = value.split(":", 1)
        p, q = _sgf_point(a, size, 0), _sgf_point(b, size, 0)
        if p is None or q is None:
            raise IllegalGame(0, f"bad setup rectangle {value!r}")
        return [
            (r, c)
            for r in range(min(p[0], q[0]), max(p[0], q[0]) + 1)
            for c in range(min(p[1], q[1]), max(p[1], q[1]) + 1)
        ]
    p = _sgf_point(value, size, 0)
    if p is None:
        raise IllegalGame(0, "pass value in setup property")
    return [p]


def to_sgf(record: GameRecord) -> str:
    """Write a record's mainline back to SGF text."""
    root: dict[str, list[str]] = {"GM": ["1"], "FF": ["4"], "CA": ["UTF-8"], "SZ": [str(record.board_size)]}
    for k, v in record.metadata.items():
        root[k] = [v]
    for color, ident in ((Color.BLACK, "AB"), (Color.WHITE, "AW")):
        pts = [p for c, p in record.handicap_setup if c == color]
        if pts:
            root[ident] = [_point_letters(p) for p in pts]
    if record.root_comment:
        root["C"] = [record.root_comment]
    nodes = [root]
    for pos in record.mainline:
        node = {pos.move.color.letter: ["" if pos.move.is_pass else _point_letters(pos.move.point)]}
        if pos.comment:
            node["C"] = [pos.comment]
        nodes.append(node)
    return serialize_sgf(GameTree(nodes))


def _point_letters(p: Point) -> str:
    return chr(ord("a") + p[1]) + chr(ord("a") + p[0])


# -- corpus ingestion -------------------------------------------------------


@dataclass
class CorpusSummary:
    games: int = 0
    comments: int = 0
    median_comment_words: float = 0.0
    variations: int = 0
    excluded_size: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "games": self.games,
            "comments": self.comments,
            "median_comment_words": self.median_comment_words,
            "variations": self.variations,
            "excluded_size": self.excluded_size,
            "rejected": [{"file": f, "reason": r} for f, r in self.rejected],
        }


def ingest_corpus(
    directory: str | Path, include_all_sizes: bool = False
) -> tuple[list[GameRecord], CorpusSummary]:
    """Parse every ``.sgf`` file under ``directory`` (sorted by name).

    Per-file failures are recorded in the summary and never abort the batch.
    Games not played on 19x19 are excluded unless ``include_all_sizes``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"SGF directory not found: {directory}")
    paths = sorted(p for p in directory.rglob("*") if p.is_file() and p.suffix.lower() == ".sgf")
    records: list[GameRecord] = []
    summary = CorpusSummary()
    lengths: list[int] = []
    for path in paths:
        name = path.relative_to(directory).as_posix()
        try:
            tree = parse_sgf(path.read_bytes())
            record = extract_mainline(tree, game_id=len(records), source=name)
        except (DataError, OSError) as e:
            summary.rejected.append((name, str(e)))
            continue
        if record.board_size != 19 and not include_all_sizes:
            summary.excluded_size += 1
            summary.rejected.append((name, f"board size {record.board_size} excluded"))
            continue
        records.append(record)
        summary.variations += record.variations
        for _, text in record.comments():
            summary.comments += 1
            lengths.append(len(tokenize(text)))
    summary.games = len(records)
    summary.median_comment_words = float(statistics.median(lengths)) if lengths else 0.0
    for name, reason in summary.rejected:
        log.info("rejected %s: %s", name, reason)
    return records, summary


def write_corpus(records: Iterable[GameRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec.to_json(), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def read_corpus(path: str | Path) -> list[GameRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(GameRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: bad corpus record: {e}") from e
    return records
