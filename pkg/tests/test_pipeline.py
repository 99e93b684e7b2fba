import json

import pytest

from goprobe.cli import main
from goprobe.errors import ConfigError
from goprobe.features import FeatureMatrix
from goprobe.gpac import read_activations
from goprobe.network import NetworkSpec
from goprobe.pipeline import PipelineConfig, Runner, canonical_json, run_pipeline
from goprobe.probe import read_results

SMALL_SPEC = {"input_planes": 7, "blocks": [{"kind": "conv3x3", "channels": 4}] * 2, "seed": 0}


def write_config(tmp_path, out="run", **extra):
    (tmp_path / "spec.json").write_text(json.dumps(SMALL_SPEC))
    values = {
        "out_dir": out,
        "network_spec": "spec.json",
        "network_seed": 5,
        "k": 3,
        "lambda": 1.0,
        "synth_seed": 2,
        "synth_games": 9,
        "synth_moves": 60,
        "synth_comment_probability": 0.3,
        "feature_classes": "pattern, keyword",
    }
    values.update(extra)
    path = tmp_path / f"{out}.ini"
    path.write_text("[pipeline]\n" + "".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


def test_config_parsing(tmp_path):
    cfg = PipelineConfig.load(write_config(tmp_path))
    assert cfg.k == 3 and cfg.lam == 1.0 and cfg.feature_classes == ("pattern", "keyword")
    assert cfg.path(cfg.network_spec) == tmp_path / "spec.json"
    assert json.loads(canonical_json(cfg.to_json()))["k"] == 3
    with pytest.raises(ConfigError):
        PipelineConfig.load(write_config(tmp_path, out="bad", k=1))
    with pytest.raises(ConfigError):
        PipelineConfig.load(write_config(tmp_path, out="bad2", colour="blue"))
    with pytest.raises(ConfigError):
        PipelineConfig.load(write_config(tmp_path, out="bad3", plane_format="planes9"))
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "missing.ini")


def test_run_resume_and_determinism(tmp_path):
    cfg = PipelineConfig.load(write_config(tmp_path))
    report = run_pipeline(cfg)
    assert (report / "report.md").exists()
    out = tmp_path / "run"
    fm = FeatureMatrix.read_csv(out / "features.csv")
    acts = read_activations(out / "activations.gpac")
    assert acts.keys.tolist() == fm.keys.tolist()
    assert acts.names == NetworkSpec.from_json(SMALL_SPEC).layer_names()
    cells = read_results(out / "results.jsonl")
    assert len(cells) == len(fm.names) * len(acts.names) * 3
    first = {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()}

    # a second run reuses every stage and leaves every byte alone
    runner = Runner(PipelineConfig.load(write_config(tmp_path)))
    runner.run()
    assert all(s.reused for s in runner.stages)
    assert {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()} == first

    # changing lambda only reruns the probe and the report
    runner = Runner(PipelineConfig.load(write_config(tmp_path, **{"lambda": 0.5})))
    runner.run()
    assert [s.name for s in runner.stages if not s.reused] == ["probe", "report"]

    # an independent run elsewhere yields identical artifacts
    run_pipeline(PipelineConfig.load(write_config(tmp_path, out="again")))
    again = tmp_path / "again"
    for name in ("boards.gpac", "activations.gpac", "features.csv", "corpus.jsonl"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_damaged_artifact_is_rebuilt(tmp_path):
    cfg = PipelineConfig.load(write_config(tmp_path))
    run_pipeline(cfg)
    feats = tmp_path / "run" / "features.csv"
    good = feats.read_bytes()
    feats.write_bytes(good[:-20])
    runner = Runner(PipelineConfig.load(write_config(tmp_path)))
    runner.run()
    assert feats.read_bytes() == good
    assert next(s for s in runner.stages if s.name == "features").reused is False


def test_cli_stages_match_run(tmp_path, capsys):
    corpus = tmp_path / "sgf"
    assert main(["synth", "--seed", "2", "--games", "6", "--moves", "50", "--out", str(corpus)]) == 0
    assert main(["ingest", "--sgf-dir", str(corpus), "--out", str(tmp_path / "c.jsonl")]) == 0
    assert main(["features", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "f.csv"), "--classes", "pattern", "keyword"]) == 0
    assert main(["encode", "--corpus", str(tmp_path / "c.jsonl"), "--format", "planes7", "--feats", str(tmp_path / "f.csv"), "--out", str(tmp_path / "b.gpac")]) == 0
    (tmp_path / "spec.json").write_text(json.dumps(SMALL_SPEC))
    assert main(["activations", "--spec", str(tmp_path / "spec.json"), "--seed", "5", "--boards", str(tmp_path / "b.gpac"), "--out", str(tmp_path / "a.gpac")]) == 0
    assert main(["probe", "--acts", str(tmp_path / "a.gpac"), "--feats", str(tmp_path / "f.csv"), "--k", "3", "--lambda", "1.0", "--seed", "0", "--out", str(tmp_path / "r.jsonl")]) == 0
    assert main(["report", "--results", str(tmp_path / "r.jsonl"), "--out", str(tmp_path / "rep")]) == 0
    fm = FeatureMatrix.read_csv(tmp_path / "f.csv")
    assert len(read_results(tmp_path / "r.jsonl")) == len(fm.names) * 4 * 3
    assert (tmp_path / "rep" / "tests.json").exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["probe", "--acts", "x"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["probe", "--acts", "a", "--feats", "f", "--k", "1", "--out", str(tmp_path / "r")]) == 1
    assert main(["run", "--config", str(write_config(tmp_path, out="bad", k=1))]) == 1
    assert main(["ingest", "--sgf-dir", str(tmp_path / "nope"), "--out", str(tmp_path / "c.jsonl")]) == 2
    (tmp_path / "junk.gpac").write_bytes(b"JUNK")
    (tmp_path / "f.csv").write_text("game_id,move_index,pattern.cut\n0,1,1\n")
    assert main(["probe", "--acts", str(tmp_path / "junk.gpac"), "--feats", str(tmp_path / "f.csv"), "--out", str(tmp_path / "r")]) == 2
    err = capsys.readouterr().err
    assert "byte 0" in err
