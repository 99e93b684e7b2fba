"""End-to-end pipeline: ingest, features, encode, activations, probe, report.

Every stage writes its artifact next to a ``<artifact>.manifest.json``
holding a hash of the stage's parameters and input digests. A stage is
skipped when its manifest is complete, the hash matches and the artifact's
digest still matches; otherwise it is recomputed.

Stage hashes are SHA-256 over ``json.dumps(obj, sort_keys=True,
separators=(",", ":"))`` of ``{"stage", "version", "params", "inputs"}``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .encode import PLANES, encode_planes7, encode_planes17, HISTORY
from .errors import ConfigError, DataError
from .features import FEATURE_CLASSES, FeatureMatrix, build_feature_matrix
from .gpac import ActivationBatch, LayerInfo, read_activations, write_activations
from .network import NetworkSpec, forward_batch, init_network
from .probe import ProbeCell, assign_folds, probe_grid, read_results, write_results
from .report import write_report
from .sgf import GameRecord, ingest_corpus, read_corpus, write_corpus
from .synth import SynthConfig, generate_synthetic_corpus
from .text import Vocabulary

log = logging.getLogger(__name__)

SYNTHETIC = "synthetic"


class StageError(DataError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# -- hashing ----------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_tree(directory: str | Path, suffix: str = ".sgf") -> str:
    """Digest of every ``suffix`` file under ``directory``: names and contents, sorted."""
    directory = Path(directory)
    h = hashlib.sha256()
    for p in sorted(q for q in directory.rglob("*") if q.is_file() and q.suffix.lower() == suffix):
        h.update(p.relative_to(directory).as_posix().encode("utf-8") + b"\0")
        h.update(sha256_file(p).encode("ascii"))
    return h.hexdigest()


# -- configuration ----------------------------------------------------------


@dataclass
class PipelineConfig:
    corpus: str = SYNTHETIC  # directory of SGF files, or "synthetic"
    out_dir: str = "run"
    vocabulary: str = ""  # empty: bundled default list
    plane_format: str = "planes7"
    network_spec: str = ""  # empty: default 5 x conv3x3 x 32
    network_seed: int = 0
    k: int = 10
    lam: float = 1.0
    fold_seed: int = 0
    cv_unit: str = "game"  # game | position
    pooling: str = "flatten"  # flatten | mean
    feature_classes: tuple[str, ...] = FEATURE_CLASSES
    commented_only: bool = True
    cut_mode: str = "point"
    tol: float = 1e-5
    max_iter: int = 1000
    synth_seed: int = 0
    synth_games: int = 50
    synth_moves: int = 120
    synth_comment_probability: float = 0.25
    base_dir: str = field(default=".", repr=False)

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2 (got {self.k})")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.plane_format not in PLANES:
            raise ConfigError(f"plane_format must be one of {sorted(PLANES)}")
        if self.cv_unit not in ("game", "position"):
            raise ConfigError("cv_unit must be game or position")
        if self.pooling not in ("flatten", "mean"):
            raise ConfigError("pooling must be flatten or mean")
        if self.cut_mode not in ("point", "stone"):
            raise ConfigError("cut_mode must be point or stone")
        bad = set(self.feature_classes) - set(FEATURE_CLASSES)
        if bad or not self.feature_classes:
            raise ConfigError(f"feature_classes must be a non-empty subset of {FEATURE_CLASSES}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be > 0 and max_iter >= 1")
        if self.corpus != SYNTHETIC and not self.path(self.corpus).is_dir():
            raise ConfigError(f"corpus directory not found: {self.path(self.corpus)}")
        for name in ("vocabulary", "network_spec"):
            value = getattr(self, name)
            if value and not self.path(value).is_file():
                raise ConfigError(f"{name} file not found: {self.path(value)}")
        if self.synth_games < 1 or self.synth_moves < 1:
            raise ConfigError("synth_games and synth_moves must be >= 1")

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["feature_classes"] = list(self.feature_classes)
        return d

    @classmethod
    def from_mapping(cls, values: dict[str, str], base_dir: str = ".") -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw: dict = {"base_dir": base_dir}
        for key, raw in values.items():
            name = "lam" if key in ("lambda", "lam") else key
            if name not in types or name == "base_dir":
                raise ConfigError(f"unknown config key {key!r}")
            t = str(types[name])
            try:
                if "tuple" in t:
                    kw[name] = tuple(s.strip() for s in raw.split(",") if s.strip())
                elif t == "bool":
                    kw[name] = _parse_bool(raw)
                elif t == "int":
                    kw[name] = int(raw)
                elif t == "float":
                    kw[name] = float(raw)
                else:
                    kw[name] = raw.strip()
            except ValueError as e:
                raise ConfigError(f"config key {key!r}: {e}") from None
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        if not parser.has_section("pipeline"):
            raise ConfigError(f"{path}: missing [pipeline] section")
        return cls.from_mapping(dict(parser.items("pipeline")), base_dir=str(path.parent))


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# -- stage building blocks --------------------------------------------------


def load_vocabulary(path: str | Path | None) -> Vocabulary:
    return Vocabulary.load(Path(path) if path else None)


def load_spec(path: str | Path | None, seed: Optional[int] = None) -> NetworkSpec:
    spec = NetworkSpec.load(path) if path else NetworkSpec()
    if seed is not None:
        spec = NetworkSpec.from_json({**spec.to_json(), "seed": int(seed)})
    spec.validate()
    return spec


def encode_positions(
    records: list[GameRecord], fmt: str, keys: Optional[np.ndarray] = None, commented_only: bool = True
) -> ActivationBatch:
    """Input planes of the chosen positions as a single-layer batch named ``input``.

    Without ``keys``, every mainline position (only commented ones if
    ``commented_only``) is encoded, ordered by game id then move index.
    """
    if fmt not in PLANES:
        raise ValueError(f"unknown plane format {fmt!r}")
    wanted: Optional[set] = None
    if keys is not None:
        wanted = {(int(g), int(m)) for g, m in np.asarray(keys).tolist()}
    sizes = {r.board_size for r in records}
    if len(sizes) > 1:
        raise DataError(f"corpus mixes board sizes {sorted(sizes)}")
    size = sizes.pop() if sizes else 19
    out_keys, planes = [], []
    for rec in sorted(records, key=lambda r: r.game_id):
        boards = None
        for pos in rec.mainline:
            key = (rec.game_id, pos.move_index)
            if wanted is not None:
                if key not in wanted:
                    continue
            elif commented_only and not pos.comment:
                continue
            if fmt == "planes7":
                stack = encode_planes7(pos.board_after)
            else:
                boards = boards or rec.boards()
                i = pos.move_index
                stack = encode_planes17(boards[max(0, i - HISTORY + 1):i], boards[i])
            out_keys.append(key)
            planes.append(stack.planes.astype(np.float32))
    if wanted is not None and len(out_keys) != len(wanted):
        raise DataError(f"{len(wanted) - len(out_keys)} requested positions are not in the corpus")
    layer = LayerInfo("input", (PLANES[fmt], size, size))
    data = np.stack(planes) if planes else np.zeros((0, *layer.shape), np.float32)
    return ActivationBatch([layer], np.array(out_keys, dtype=np.uint32).reshape(-1, 2), {"input": data})


def compute_activations(boards: ActivationBatch, spec: NetworkSpec) -> ActivationBatch:
    """Run the network over the ``input`` layer of ``boards``."""
    if "input" not in boards.data:
        raise DataError("board file has no 'input' layer")
    weights = init_network(spec)
    acts = forward_batch(weights, boards.data["input"])
    layers = [LayerInfo(n, tuple(s)) for n, s in zip(spec.layer_names(), spec.layer_shapes())]
    return ActivationBatch(layers, boards.keys, acts)


def run_probes(
    acts: ActivationBatch,
    feats: FeatureMatrix,
    k: int = 10,
    lam: float = 1.0,
    seed: int = 0,
    cv_unit: str = "game",
    **kw,
) -> list[ProbeCell]:
    folds = assign_folds(feats.games, k=k, seed=seed, by_group=(cv_unit == "game"))
    return probe_grid(acts, feats, folds, lam, **kw)


# -- the runner -------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    artifact: str
    reused: bool
    digest: str


class Runner:
    def __init__(self, cfg: PipelineConfig, progress: Optional[Callable[[str], None]] = None):
        cfg.validate()
        self.cfg = cfg
        self.out = cfg.path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.progress = progress or (lambda msg: log.info(msg))
        self.stages: list[StageRecord] = []

    def _stage(self, name: str, artifact: Path, params: dict, inputs: dict, build: Callable[[Path], None]) -> str:
        """Run ``build(artifact)`` unless a matching, complete result exists. Returns its digest."""
        stage_hash = sha256_bytes(
            canonical_json({"stage": name, "version": __version__, "params": params, "inputs": inputs}).encode()
        )
        mpath = Path(str(artifact) + ".manifest.json")
        if mpath.exists() and artifact.exists():
            try:
                m = json.loads(mpath.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                m = {}
            if m.get("complete") and m.get("stage_hash") == stage_hash and m.get("digest") == _digest(artifact):
                self.progress(f"{name}: reusing {artifact.name}")
                self.stages.append(StageRecord(name, artifact.name, True, m["digest"]))
                return m["digest"]
        manifest = {"stage": name, "stage_hash": stage_hash, "params": params, "inputs": inputs, "complete": False}
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.progress(f"{name}: building {artifact.name}")
        try:
            build(artifact)
        except Exception as e:
            raise StageError(name, e) from e
        digest = _digest(artifact)
        manifest.update(complete=True, digest=digest)
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.stages.append(StageRecord(name, artifact.name, False, digest))
        return digest

    def run(self) -> Path:
        cfg = self.cfg
        out = self.out

        if cfg.corpus == SYNTHETIC:
            synth_cfg = SynthConfig(
                seed=cfg.synth_seed,
                games=cfg.synth_games,
                moves=cfg.synth_moves,
                comment_probability=cfg.synth_comment_probability,
            )
            sgf_dir = out / "synth"
            self._stage(
                "synth",
                sgf_dir,
                {"synth": asdict(synth_cfg)},
                {"vocabulary": self._vocab_digest()},
                lambda p: generate_synthetic_corpus(p, synth_cfg, self._vocab()),
            )
        else:
            sgf_dir = cfg.path(cfg.corpus)

        corpus_path = out / "corpus.jsonl"

        def ingest(p: Path) -> None:
            records, summary = ingest_corpus(sgf_dir)
            if not records:
                raise DataError(f"no usable games in {sgf_dir}")
            write_corpus(records, p)
            (out / "corpus.summary.json").write_text(
                json.dumps(summary.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )

        corpus_digest = self._stage("ingest", corpus_path, {}, {"sgf": sha256_tree(sgf_dir)}, ingest)

        feats_path = out / "features.csv"

        def features(p: Path) -> None:
            fm = build_feature_matrix(
                read_corpus(corpus_path), self._vocab(), cfg.feature_classes, cfg.commented_only, cfg.cut_mode
            )
            if len(fm) == 0:
                raise DataError("feature matrix has no rows")
            fm.write_csv(p)

        feats_digest = self._stage(
            "features",
            feats_path,
            {
                "classes": list(cfg.feature_classes),
                "commented_only": cfg.commented_only,
                "cut_mode": cfg.cut_mode,
            },
            {"corpus": corpus_digest, "vocabulary": self._vocab_digest()},
            features,
        )

        boards_path = out / "boards.gpac"
        boards_digest = self._stage(
            "encode",
            boards_path,
            {"format": cfg.plane_format},
            {"corpus": corpus_digest, "features": feats_digest},
            lambda p: write_activations(
                encode_positions(read_corpus(corpus_path), cfg.plane_format, FeatureMatrix.read_csv(feats_path).keys),
                p,
            ),
        )

        spec = load_spec(cfg.path(cfg.network_spec) if cfg.network_spec else None, cfg.network_seed)
        if spec.input_planes != PLANES[cfg.plane_format]:
            raise ConfigError(
                f"network expects {spec.input_planes} input planes but {cfg.plane_format} has {PLANES[cfg.plane_format]}"
            )
        acts_path = out / "activations.gpac"
        acts_digest = self._stage(
            "activations",
            acts_path,
            {"spec": spec.to_json()},
            {"boards": boards_digest},
            lambda p: write_activations(compute_activations(read_activations(boards_path), spec), p),
        )

        results_path = out / "results.jsonl"

        def probe(p: Path) -> None:
            cells = run_probes(
                read_activations(acts_path),
                FeatureMatrix.read_csv(feats_path),
                k=cfg.k,
                lam=cfg.lam,
                seed=cfg.fold_seed,
                cv_unit=cfg.cv_unit,
                pooling=cfg.pooling,
                tol=cfg.tol,
                max_iter=cfg.max_iter,
                progress=self.progress,
            )
            write_results(cells, p)

        results_digest = self._stage(
            "probe",
            results_path,
            {
                "k": cfg.k,
                "lambda": cfg.lam,
                "fold_seed": cfg.fold_seed,
                "cv_unit": cfg.cv_unit,
                "pooling": cfg.pooling,
                "tol": cfg.tol,
                "max_iter": cfg.max_iter,
            },
            {"activations": acts_digest, "features": feats_digest},
            probe,
        )

        report_dir = out / "report"
        self._stage(
            "report",
            report_dir,
            {"config": cfg.to_json()},
            {"results": results_digest, "vocabulary": self._vocab_digest()},
            lambda p: write_report(
                {"model": read_results(results_path)},
                p,
                self._vocab(),
                manifest={
                    "config": cfg.to_json(),
                    "version": __version__,
                    "network_seed": spec.seed,
                    "fold_seed": cfg.fold_seed,
                    "synth_seed": cfg.synth_seed if cfg.corpus == SYNTHETIC else None,
                    "inputs": {"results": results_digest, "features": feats_digest, "activations": acts_digest},
                    "config_hash": sha256_bytes(canonical_json(cfg.to_json()).encode()),
                },
            ),
        )
        return report_dir

    def _vocab(self) -> Vocabulary:
        return load_vocabulary(self.cfg.path(self.cfg.vocabulary) if self.cfg.vocabulary else None)

    def _vocab_digest(self) -> str:
        return sha256_bytes(self._vocab().dumps().encode("utf-8"))


def _digest(path: Path) -> str:
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode("utf-8") + b"\0")
            h.update(sha256_file(p).encode("ascii"))
        return h.hexdigest()
    return sha256_file(path)


def run_pipeline(cfg: PipelineConfig, progress: Optional[Callable[[str], None]] = None) -> Path:
    """Run every stage; returns the report directory."""
    return Runner(cfg, progress).run()
