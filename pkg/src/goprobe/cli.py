"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, DataError
from .features import FEATURE_CLASSES, FeatureMatrix, build_feature_matrix, degenerate_features
from .gpac import read_activations, write_activations
from .pipeline import (
    PipelineConfig,
    compute_activations,
    encode_positions,
    load_spec,
    load_vocabulary,
    run_pipeline,
    run_probes,
)
from .probe import read_results, write_results
from .report import write_report
from .sgf import ingest_corpus, read_corpus, write_corpus
from .synth import SynthConfig, generate_synthetic_corpus
from .text import Vocabulary, go_terms, rank_keywords, select_control_words

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("goprobe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _cmd_ingest(a) -> None:
    records, summary = ingest_corpus(a.sgf_dir, include_all_sizes=a.all_sizes)
    write_corpus(records, a.out)
    print(json.dumps(summary.to_json(), indent=2, sort_keys=True))


def _cmd_vocab(a) -> None:
    comments = [text for rec in read_corpus(a.corpus) for i, text in rec.comments() if i > 0]
    keywords = rank_keywords(comments, go_terms(), a.keywords)
    function, content, matched = select_control_words(comments, keywords, a.frequent)
    Vocabulary(tuple(keywords), tuple(function), tuple(content), tuple(matched)).save(a.out)


def _cmd_features(a) -> None:
    fm = build_feature_matrix(
        read_corpus(a.corpus),
        load_vocabulary(a.vocab),
        a.classes or FEATURE_CLASSES,
        commented_only=not a.all_positions,
        cut_mode=a.cut_mode,
    )
    fm.write_csv(a.out)
    const = degenerate_features(fm)
    print(f"{len(fm)} positions x {len(fm.names)} features written to {a.out}")
    if const:
        print(f"warning: {len(const)} constant features: {', '.join(const)}", file=sys.stderr)


def _cmd_encode(a) -> None:
    keys = FeatureMatrix.read_csv(a.feats).keys if a.feats else None
    batch = encode_positions(read_corpus(a.corpus), a.format, keys, commented_only=not a.all_positions)
    write_activations(batch, a.out)
    print(f"{len(batch)} positions encoded as {a.format} to {a.out}")


def _cmd_activations(a) -> None:
    spec = load_spec(a.spec, a.seed)
    acts = compute_activations(read_activations(a.boards), spec)
    write_activations(acts, a.out)
    print(f"{len(acts)} positions x {len(acts.layers)} layers written to {a.out}")


def _cmd_probe(a) -> None:
    if a.k < 2:
        raise ConfigError("--k must be >= 2")
    cells = run_probes(
        read_activations(a.acts),
        FeatureMatrix.read_csv(a.feats),
        k=a.k,
        lam=a.lam,
        seed=a.seed,
        cv_unit=a.cv_unit,
        pooling=a.pooling,
        tol=a.tol,
        max_iter=a.max_iter,
        progress=lambda m: log.info(m),
    )
    write_results(cells, a.out)
    trained = sum(c.trained for c in cells)
    print(f"{len(cells)} probe results ({trained} trained) written to {a.out}")


def _cmd_report(a) -> None:
    names = a.names or [Path(p).stem for p in a.results]
    if len(names) != len(a.results) or len(set(names)) != len(names):
        raise ConfigError("--names must give one distinct name per results file")
    results = {n: read_results(p) for n, p in zip(names, a.results)}
    write_report(results, a.out, load_vocabulary(a.vocab), pairing=a.pairing)
    print(f"report written to {a.out}")


def _cmd_synth(a) -> None:
    cfg = SynthConfig(seed=a.seed, games=a.games, moves=a.moves, comment_probability=a.comment_probability)
    try:
        cfg.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    m = generate_synthetic_corpus(a.out, cfg)
    print(f"{len(m.files)} games with {m.comments} comments written to {a.out}")


def _cmd_run(a) -> None:
    cfg = PipelineConfig.load(a.config)
    report = run_pipeline(cfg, progress=lambda m: log.info(m))
    print(f"report written to {report}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="goprobe", description="Probe Go policy networks for board patterns and commentary terms.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse a directory of SGF files into a corpus file")
    s.add_argument("--sgf-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--all-sizes", action="store_true", help="keep games not played on 19x19")
    s.set_defaults(func=_cmd_ingest)

    s = sub.add_parser("vocab", help="derive keyword and control lists from a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--keywords", type=int, default=30)
    s.add_argument("--frequent", type=int, default=30)
    s.set_defaults(func=_cmd_vocab)

    s = sub.add_parser("features", help="build the binary feature matrix")
    s.add_argument("--corpus", required=True)
    s.add_argument("--vocab", help="vocabulary file (default: bundled lists)")
    s.add_argument("--out", required=True)
    s.add_argument("--classes", nargs="+", choices=FEATURE_CLASSES)
    s.add_argument("--all-positions", action="store_true", help="include positions without a comment")
    s.add_argument("--cut-mode", choices=("point", "stone"), default="point")
    s.set_defaults(func=_cmd_features)

    s = sub.add_parser("encode", help="encode positions as input planes (GPAC, layer 'input')")
    s.add_argument("--corpus", required=True)
    s.add_argument("--format", choices=("planes7", "planes17"), default="planes7")
    s.add_argument("--out", required=True)
    s.add_argument("--feats", help="encode exactly the rows of this feature matrix")
    s.add_argument("--all-positions", action="store_true")
    s.set_defaults(func=_cmd_encode)

    s = sub.add_parser("activations", help="run the seeded network over encoded boards")
    s.add_argument("--spec", help="network spec JSON (default: 5 x conv3x3 x 32)")
    s.add_argument("--seed", type=int)
    s.add_argument("--boards", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_activations)

    s = sub.add_parser("probe", help="train the feature x layer x fold probe grid")
    s.add_argument("--acts", required=True)
    s.add_argument("--feats", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--cv-unit", choices=("game", "position"), default="game")
    s.add_argument("--pooling", choices=("flatten", "mean"), default="flatten")
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--max-iter", type=int, default=1000)
    s.set_defaults(func=_cmd_probe)

    s = sub.add_parser("report", help="summarise probe results")
    s.add_argument("--results", nargs="+", required=True)
    s.add_argument("--names", nargs="+")
    s.add_argument("--vocab")
    s.add_argument("--pairing", choices=("feature", "feature-fold"), default="feature")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_report)

    s = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--games", type=int, default=50)
    s.add_argument("--moves", type=int, default=120)
    s.add_argument("--comment-probability", type=float, default=0.25)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("run", help="run the whole pipeline from a config file")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_run)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
