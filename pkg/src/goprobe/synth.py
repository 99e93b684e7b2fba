"""Synthetic annotated corpus with known keyword/pattern statistics.

Games are uniformly random legal play (passes excluded while any other move
is legal) that ends by resignation after a fixed number of moves. A fraction
of moves receives a comment: a bag of words in which each pattern keyword
appears with one probability when its pattern is on the board and another
when it is not, every other vocabulary term appears with a small fixed
probability, and nothing else depends on the position.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .goban import BLACK, Board, Move, legal_moves, place_stone
from .patterns import extract_pattern_features
from .sgf import AnnotatedPosition, GameRecord, to_sgf
from .text import Vocabulary, default_vocabulary

# which keyword a board pattern plants
PATTERN_KEYWORDS = {"cut": "cut", "eye": "eye", "ladder": "atari", "wall": "wall"}

# surface forms that the tokenizer folds back onto vocabulary terms
_SPELLINGS = {"wasnt": "wasn't", "youre": "you're", "shouldnt": "shouldn't", "theres": "there's"}


@dataclass
class Emission:
    p_present: float = 0.9
    p_absent: float = 0.05


@dataclass
class SynthConfig:
    seed: int = 0
    games: int = 50
    moves: int = 120
    board_size: int = 19
    comment_probability: float = 0.25
    emission: dict[str, Emission] = field(default_factory=lambda: {p: Emission() for p in PATTERN_KEYWORDS})
    term_probability: float = 0.12

    def validate(self) -> None:
        if self.games < 1:
            raise ValueError("games must be >= 1")
        if self.moves < 1:
            raise ValueError("moves must be >= 1")
        probs = [self.comment_probability, self.term_probability]
        probs += [p for e in self.emission.values() for p in (e.p_present, e.p_absent)]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        unknown = set(self.emission) - set(PATTERN_KEYWORDS)
        if unknown:
            raise ValueError(f"unknown patterns in emission model: {sorted(unknown)}")


def random_game(rng: np.random.Generator, size: int, moves: int) -> list[Board]:
    """Boards after each of ``moves`` uniformly random legal moves."""
    board = Board.empty(size)
    out = []
    for _ in range(moves):
        plays = sorted((m.point for m in legal_moves(board) if not m.is_pass))
        if plays:
            r, c = plays[int(rng.integers(len(plays)))]
            move = Move.play(board.to_move, r, c)
        else:
            move = Move.pass_(board.to_move)
        board = place_stone(board, move)
        out.append(board)
    return out


def _moves_of(boards: list[Board], size: int) -> list[Move]:
    moves = []
    prev = Board.empty(size)
    for b in boards:
        added = [i for i, (x, y) in enumerate(zip(prev.cells, b.cells)) if x == 0 and y != 0]
        moves.append(Move(prev.to_move, divmod(added[0], size)) if added else Move.pass_(prev.to_move))
        prev = b
    return moves


def _comment(rng: np.random.Generator, present: dict[str, bool], cfg: SynthConfig, vocab: Vocabulary) -> tuple[str, dict[str, bool]]:
    planted = {}
    words = []
    for pattern, kw in PATTERN_KEYWORDS.items():
        e = cfg.emission.get(pattern)
        if e is None:
            continue
        p = e.p_present if present[pattern] else e.p_absent
        planted[pattern] = bool(rng.random() < p)
        if planted[pattern]:
            words.append(kw)
    reserved = {PATTERN_KEYWORDS[p] for p in cfg.emission}
    for term in vocab.terms:
        if term not in reserved and rng.random() < cfg.term_probability:
            words.append(_SPELLINGS.get(term, term))
    if not words:
        words = ["hmm"]
    words = [words[i] for i in rng.permutation(len(words))]
    text = " ".join(words)
    return text[0].upper() + text[1:] + ".", planted


@dataclass
class SynthManifest:
    config: dict
    files: list[str]
    positions: int
    comments: int
    # per pattern: counts of commented positions by (pattern present?, keyword emitted?)
    observed: dict[str, dict[str, int]]

    def to_json(self) -> dict:
        return asdict(self)


def generate_synthetic_corpus(
    out_dir: str | Path, cfg: Optional[SynthConfig] = None, vocab: Optional[Vocabulary] = None
) -> SynthManifest:
    """Write ``game_NNNN.sgf`` files and ``ground_truth.json`` into ``out_dir``."""
    cfg = cfg or SynthConfig()
    cfg.validate()
    vocab = vocab or default_vocabulary()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    observed = {
        p: {"present": 0, "present_with_keyword": 0, "absent": 0, "absent_with_keyword": 0}
        for p in cfg.emission
    }
    files, n_comments = [], 0
    for g in range(cfg.games):
        boards = random_game(rng, cfg.board_size, cfg.moves)
        mainline = []
        for i, (move, board) in enumerate(zip(_moves_of(boards, cfg.board_size), boards), start=1):
            comment = None
            if rng.random() < cfg.comment_probability:
                present = extract_pattern_features(board).as_dict()
                comment, planted = _comment(rng, present, cfg, vocab)
                n_comments += 1
                for p, hit in planted.items():
                    side = "present" if present[p] else "absent"
                    observed[p][side] += 1
                    observed[p][side + "_with_keyword"] += int(hit)
            mainline.append(AnnotatedPosition(move, comment, board, i))
        loser = boards[-1].to_move if boards else BLACK
        record = GameRecord(
            game_id=g,
            board_size=cfg.board_size,
            handicap_setup=[],
            mainline=mainline,
            metadata={
                "PB": "random",
                "PW": "random",
                "RE": f"{loser.opponent.letter}+R",
                "GN": f"synthetic {cfg.seed}-{g}",
            },
        )
        name = f"game_{g:04d}.sgf"
        (out / name).write_text(to_sgf(record) + "\n", encoding="utf-8", newline="\n")
        files.append(name)
    manifest = SynthManifest(
        config=asdict(cfg),
        files=files,
        positions=cfg.games * cfg.moves,
        comments=n_comments,
        observed=observed,
    )
    (out / "ground_truth.json").write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    return manifest
