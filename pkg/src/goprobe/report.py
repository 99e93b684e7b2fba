"""Report emission: AUC tables, best-layer histograms with KDE, test results, SVG figures.

Outputs are deterministic (no timestamps, sorted keys) so reruns compare
byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .errors import DataError
from .probe import FeatureSummary, ProbeCell, summarize_all
from .stats import EmptyClass, LayerHistogram, best_layer_histogram, pearson, wilcoxon_signed_rank
from .text import Vocabulary

HIST_CLASSES = ("pattern", "keyword", "control")


def _term(name: str) -> str:
    return name.split(".", 1)[1]


def keyword_control_pairs(summaries: Sequence[FeatureSummary], vocab: Vocabulary) -> list[tuple[str, str, float, float]]:
    """(keyword, control, keyword max AUC, control max AUC) for each matched pair with defined AUCs."""
    by_term_kw = {_term(s.feature): s for s in summaries if s.feature_class == "keyword"}
    by_term_ctl = {_term(s.feature): s for s in summaries if s.feature_class in ("function", "content")}
    pairs = []
    for kw, ctl in zip(vocab.keywords, vocab.matched):
        a, b = by_term_kw.get(kw), by_term_ctl.get(ctl)
        if a and b and a.max_mean_auc is not None and b.max_mean_auc is not None:
            pairs.append((kw, ctl, a.max_mean_auc, b.max_mean_auc))
    return pairs


def _test_json(fn, *args, **kw) -> dict:
    try:
        r = fn(*args, **kw)
    except (DataError, ValueError) as e:
        return {"error": str(e)}
    return {"statistic": r.statistic, "p_value": r.p_value, "n_effective": r.n_effective, "method": r.method}


def model_pairs(
    a: Sequence[ProbeCell], b: Sequence[ProbeCell], unit: str = "feature"
) -> tuple[list[float], list[float], list[str]]:
    """Paired AUCs of two models over shared features.

    ``unit="feature"`` pairs max mean AUCs; ``"feature-fold"`` pairs each
    fold's best AUC over layers.
    """
    if unit == "feature":
        sa = {s.feature: s.max_mean_auc for s in summarize_all(a)}
        sb = {s.feature: s.max_mean_auc for s in summarize_all(b)}
        ids = [f for f in sa if f in sb and sa[f] is not None and sb[f] is not None]
        return [sa[f] for f in ids], [sb[f] for f in ids], ids
    if unit == "feature-fold":
        def best(cells):
            out: dict[tuple[str, int], float] = {}
            for c in cells:
                if c.auc is not None:
                    key = (c.feature, c.fold)
                    out[key] = max(out.get(key, -math.inf), c.auc)
            return out

        ba, bb = best(a), best(b)
        ids = sorted(k for k in ba if k in bb)
        return [ba[k] for k in ids], [bb[k] for k in ids], [f"{f}#{i}" for f, i in ids]
    raise ValueError(f"unknown pairing unit {unit!r}")


def write_report(
    results: dict[str, Sequence[ProbeCell]],
    out_dir: str | Path,
    vocab: Optional[Vocabulary] = None,
    manifest: Optional[dict] = None,
    pairing: str = "feature",
) -> dict:
    """Write the report for one or more models' probe results into ``out_dir``."""
    if not results:
        raise DataError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = list(results)
    summaries = {m: summarize_all(list(cells)) for m, cells in results.items()}

    # feature table, one row per feature in first-seen order
    order: list[str] = []
    classes: dict[str, str] = {}
    for m in models:
        for s in summaries[m]:
            if s.feature not in classes:
                order.append(s.feature)
                classes[s.feature] = s.feature_class
    index = {m: {s.feature: s for s in summaries[m]} for m in models}
    with open(out / "table.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["feature", "class"] + [f"{m}_{col}" for m in models for col in ("max_auc", "best_layer", "undefined_folds")])
        for feat in order:
            row = [feat, classes[feat]]
            for m in models:
                s = index[m].get(feat)
                row += ["", "", ""] if s is None else [_fmt(s.max_mean_auc), _fmt(s.best_layer), s.undefined_folds]
            w.writerow(row)
    with open(out / "layers.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["model", "feature", "layer", "mean_auc"])
        for m in models:
            for s in summaries[m]:
                for layer, v in enumerate(s.layer_mean_auc):
                    w.writerow([m, s.feature, layer, _fmt(v)])

    # best-layer histograms
    hists: dict[str, dict[str, dict]] = {}
    for m in models:
        hists[m] = {}
        for cls in HIST_CLASSES:
            try:
                h = best_layer_histogram(summaries[m], cls)
            except EmptyClass:
                continue
            hists[m][cls] = {"counts": h.counts, "grid": h.grid, "density": h.density, "bandwidth": h.bandwidth}
            (out / f"best_layers_{_slug(m)}_{cls}.svg").write_text(svg_histogram(h, f"{m}: {cls}"), encoding="utf-8")
    _write_json(out / "histograms.json", hists)

    # statistical tests
    tests: dict = {"per_model": {}}
    for m in models:
        entry: dict = {}
        if vocab is not None and vocab.matched:
            pairs = keyword_control_pairs(summaries[m], vocab)
            entry["keyword_vs_matched_control"] = {
                "pairs": [{"keyword": k, "control": c, "keyword_auc": a, "control_auc": b} for k, c, a, b in pairs],
                "wilcoxon_greater": _test_json(
                    wilcoxon_signed_rank, [p[2] for p in pairs], [p[3] for p in pairs], alternative="greater"
                )
                if pairs
                else {"error": "no complete keyword/control pairs"},
            }
        tests["per_model"][m] = entry
    if len(models) >= 2:
        a, b = models[0], models[1]
        xa, xb, ids = model_pairs(results[a], results[b], pairing)
        cmp: dict = {"models": [a, b], "pairing": pairing, "n_pairs": len(ids)}
        cmp["wilcoxon_two_sided"] = _test_json(wilcoxon_signed_rank, xa, xb) if ids else {"error": "no shared features"}
        try:
            cmp["pearson"] = pearson(xa, xb)
        except (DataError, ValueError) as e:
            cmp["pearson"] = {"error": str(e)}
        tests["comparison"] = cmp
        (out / "scatter.svg").write_text(svg_scatter(xa, xb, a, b), encoding="utf-8")
    _write_json(out / "tests.json", tests)

    if manifest is not None:
        _write_json(out / "manifest.json", manifest)

    (out / "report.md").write_text(_markdown(models, order, classes, index, hists, tests), encoding="utf-8")
    return {"summaries": summaries, "histograms": hists, "tests": tests}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in s)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _markdown(models, order, classes, index, hists, tests) -> str:
    lines = ["# Probe report", "", "## Max mean ROC AUC per feature", ""]
    lines.append("| feature | class | " + " | ".join(models) + " |")
    lines.append("|---|---|" + "---|" * len(models))
    for feat in order:
        cells = []
        for m in models:
            s = index[m].get(feat)
            cells.append("n/a" if s is None or s.max_mean_auc is None else f"{s.max_mean_auc:.3f} (L{s.best_layer})")
        lines.append(f"| {feat} | {classes[feat]} | " + " | ".join(cells) + " |")
    lines += ["", "## Best-layer histograms", ""]
    for m in models:
        for cls, h in hists[m].items():
            lines.append(f"- {m} / {cls}: counts per layer {h['counts']}")
    lines += ["", "## Tests", "", "```json", json.dumps(tests, indent=2, sort_keys=True), "```", ""]
    return "\n".join(lines)


# -- SVG --------------------------------------------------------------------

_W, _H, _PAD = 480, 320, 40


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">'
        f'<rect width="{_W}" height="{_H}" fill="white"/>'
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>'
    )
    axes = (
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>'
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>'
    )
    return head + axes + "".join(body) + "</svg>\n"


def svg_histogram(h: LayerHistogram, title: str) -> str:
    """Bars of best-layer counts with the KDE curve scaled to the same area."""
    L = len(h.counts)
    total = sum(h.counts)
    span_x = _W - 2 * _PAD
    span_y = _H - 2 * _PAD
    slot = span_x / L
    dens_scale = total  # density * count * bin width (1 layer) equals expected count
    top = max(max(h.counts), max(d * dens_scale for d in h.density), 1e-12)
    body = []
    for i, c in enumerate(h.counts):
        bh = span_y * c / top
        x = _PAD + i * slot + slot * 0.1
        body.append(
            f'<rect x="{x:.2f}" y="{_H - _PAD - bh:.2f}" width="{slot * 0.8:.2f}" height="{bh:.2f}" fill="#8fb3d9"/>'
        )
        body.append(
            f'<text x="{_PAD + (i + 0.5) * slot:.2f}" y="{_H - _PAD + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{i}</text>'
        )
    pts = []
    for g, d in zip(h.grid, h.density):
        x = _PAD + (g + 0.5) * slot
        y = _H - _PAD - span_y * d * dens_scale / top
        pts.append(f"{x:.2f},{y:.2f}")
    body.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    return _svg(body, title)


def svg_scatter(x: Sequence[float], y: Sequence[float], xlabel: str, ylabel: str) -> str:
    span_x = _W - 2 * _PAD
    span_y = _H - 2 * _PAD
    lo = min([*x, *y, 0.5]) if x else 0.0
    hi = max([*x, *y, 1.0]) if x else 1.0
    rng = max(hi - lo, 1e-12)
    body = [
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_PAD}" stroke="#bbbbbb" stroke-dasharray="4"/>'
    ]
    for a, b in zip(x, y):
        cx = _PAD + span_x * (a - lo) / rng
        cy = _H - _PAD - span_y * (b - lo) / rng
        body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="#2c3e50"/>')
    body.append(
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(xlabel)}</text>'
    )
    body.append(
        f'<text x="12" y="{_H / 2}" text-anchor="middle" font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 12 {_H / 2})">{escape(ylabel)}</text>'
    )
    return _svg(body, f"max AUC: {xlabel} vs {ylabel}")
