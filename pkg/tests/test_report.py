import json

import pytest

from goprobe.probe import ProbeCell
from goprobe.report import keyword_control_pairs, model_pairs, write_report
from goprobe.probe import summarize_all
from goprobe.text import Vocabulary


def grid(feature, cls, aucs):
    return [
        ProbeCell(feature, cls, l, f"l{l}", f, a, "ok", True)
        for l, row in enumerate(aucs)
        for f, a in enumerate(row)
    ]


VOCAB = Vocabulary(("ko", "aji"), ("the",), ("stones", "fine"), ("fine", "stones"))


def cells(shift=0.0):
    out = []
    out += grid("keyword.ko", "keyword", [[0.6 + shift, 0.62], [0.8, 0.78 + shift]])
    out += grid("keyword.aji", "keyword", [[0.7, 0.71], [0.65 + shift, 0.6]])
    out += grid("function.the", "function", [[0.55, 0.5], [0.52, 0.51 + shift]])
    out += grid("content.stones", "content", [[0.58, 0.6], [0.5 + shift, 0.56]])
    out += grid("content.fine", "content", [[0.5, 0.52 + shift], [0.51, 0.5]])
    return out


def test_pairs_follow_matched_order():
    pairs = keyword_control_pairs(summarize_all(cells()), VOCAB)
    assert [(k, c) for k, c, _, _ in pairs] == [("ko", "fine"), ("aji", "stones")]
    assert pairs[0][2] == pytest.approx(0.79) and pairs[0][3] == pytest.approx(0.51)


def test_model_pairs_units():
    a, b = cells(), cells(0.05)
    xa, xb, ids = model_pairs(a, b, "feature")
    assert len(ids) == 5 and len(xa) == len(xb) == 5
    xa, xb, ids = model_pairs(a, b, "feature-fold")
    assert len(ids) == 10 and ids[0].endswith("#0")
    with pytest.raises(ValueError):
        model_pairs(a, b, "game")


def test_report_files(tmp_path):
    out = write_report({"il": cells(), "random": cells(-0.05)}, tmp_path, VOCAB, manifest={"seed": 1})
    names = sorted(p.name for p in tmp_path.iterdir())
    for expected in ("table.csv", "layers.csv", "histograms.json", "tests.json", "manifest.json", "report.md", "scatter.svg"):
        assert expected in names
    assert "best_layers_il_keyword.svg" in names
    tests = json.loads((tmp_path / "tests.json").read_text())
    kv = tests["per_model"]["il"]["keyword_vs_matched_control"]
    assert len(kv["pairs"]) == 2 and kv["wilcoxon_greater"]["method"] == "exact"
    assert tests["comparison"]["n_pairs"] == 5
    hist = json.loads((tmp_path / "histograms.json").read_text())
    assert sum(hist["il"]["keyword"]["counts"]) == 4
    assert sum(hist["il"]["control"]["counts"]) == 6
    table = (tmp_path / "table.csv").read_text().splitlines()
    assert table[0].startswith("feature,class,il_max_auc") and len(table) == 6
    assert out["tests"] == tests


def test_report_is_reproducible(tmp_path):
    write_report({"m": cells()}, tmp_path / "a", VOCAB)
    write_report({"m": cells()}, tmp_path / "b", VOCAB)
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
