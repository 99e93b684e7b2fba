"""Wilcoxon signed-rank test, Pearson correlation, Gaussian KDE, best-layer histograms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .probe import FeatureSummary, average_ranks

EXACT_THRESHOLD = 25
BANDWIDTH_FLOOR = 1e-9
ALTERNATIVES = ("two-sided", "greater", "less")


class AllZeroDifferences(DataError):
    pass


class ConstantInput(DataError):
    pass


class EmptySample(DataError):
    pass


class EmptyClass(DataError):
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    statistic: float
    p_value: float
    n_effective: int
    method: str  # "exact" | "normal-approximation"


def _signed_rank_distribution(doubled_ranks: np.ndarray) -> np.ndarray:
    """Counts of each doubled W+ value over all 2^n sign patterns.

    Ranks are averaged over ties, so twice a rank is always an integer and
    the count table indexed by ``2 * W+`` is exact.
    """
    counts = np.zeros(int(doubled_ranks.sum()) + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:len(counts) - r]
        counts += shifted
    return counts


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Optional[Sequence[float]] = None,
    alternative: str = "two-sided",
    method: str = "auto",
    exact_threshold: int = EXACT_THRESHOLD,
) -> TestResult:
    """Signed-rank test of ``a - b`` (or of ``a`` alone when ``b`` is None).

    Zero differences are dropped. "greater" tests whether the differences
    tend to be positive. ``method`` is "auto", "exact" or "approx"; auto uses
    the exact null distribution when at most ``exact_threshold`` nonzero
    differences remain.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    if method not in ("auto", "exact", "approx"):
        raise ValueError("method must be auto, exact or approx")
    d = np.asarray(a, dtype=np.float64)
    if b is not None:
        bb = np.asarray(b, dtype=np.float64)
        if bb.shape != d.shape:
            raise ValueError("paired samples must have equal length")
        d = d - bb
    if d.ndim != 1 or len(d) == 0:
        raise ValueError("need a non-empty 1-D sample")
    if not np.isfinite(d).all():
        raise ValueError("sample contains non-finite values")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise AllZeroDifferences("every paired difference is zero")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    exact = method == "exact" or (method == "auto" and n <= exact_threshold)
    if exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _signed_rank_distribution(doubled)
        total = 2.0 ** n
        w2 = int(round(2 * w_plus))
        p_ge = counts[w2:].sum() / total
        p_le = counts[:w2 + 1].sum() / total
        if alternative == "greater":
            p = p_ge
        elif alternative == "less":
            p = p_le
        else:
            p = 2 * min(p_ge, p_le)
        return TestResult(w_plus, float(min(1.0, p)), n, "exact")

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
    sd = math.sqrt(var)
    diff = w_plus - mean
    if alternative == "greater":
        p = 0.5 * math.erfc((diff - 0.5) / sd / math.sqrt(2))
    elif alternative == "less":
        p = 0.5 * math.erfc(-(diff + 0.5) / sd / math.sqrt(2))
    else:
        z = max(abs(diff) - 0.5, 0.0) / sd
        p = math.erfc(z / math.sqrt(2))
    return TestResult(w_plus, float(min(1.0, p)), n, "normal-approximation")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and equally long")
    if len(x) < 2:
        raise ValueError("need at least two points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInput("Pearson correlation is undefined for a constant input")
    xc = x - x.mean()
    yc = y - y.mean()
    r = float((xc @ yc) / math.sqrt((xc @ xc) * (yc @ yc)))
    return max(-1.0, min(1.0, r))


def scott_bandwidth(samples: Sequence[float]) -> float:
    s = np.asarray(samples, dtype=np.float64)
    if len(s) < 2:
        raise EmptySample("bandwidth selection needs at least two samples")
    return max(float(s.std(ddof=1)) * len(s) ** (-0.2), BANDWIDTH_FLOOR)


def kde(samples: Sequence[float], grid: Sequence[float], bandwidth: Optional[float] = None) -> np.ndarray:
    """Gaussian kernel density of ``samples`` evaluated at ``grid``."""
    s = np.asarray(samples, dtype=np.float64)
    if len(s) == 0:
        raise EmptySample("no samples")
    if bandwidth is None:
        h = scott_bandwidth(s)
    else:
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        h = float(bandwidth)
    g = np.asarray(grid, dtype=np.float64)
    u = (g[:, None] - s[None, :]) / h
    return np.exp(-0.5 * u * u).sum(axis=1) / (len(s) * h * math.sqrt(2 * math.pi))


@dataclass
class LayerHistogram:
    feature_class: str
    counts: list[int]
    grid: list[float]
    density: list[float]
    bandwidth: float

    @property
    def mode(self) -> int:
        return int(np.argmax(self.counts))


CLASS_GROUPS = {
    "pattern": ("pattern",),
    "keyword": ("keyword",),
    "control": ("function", "content"),
    "function": ("function",),
    "content": ("content",),
}


def best_layer_histogram(
    summaries: Sequence[FeatureSummary], feature_class: str, points_per_layer: int = 50
) -> LayerHistogram:
    """Pool every fold's best layer over the features of one class.

    "control" covers both function and content words. The KDE grid spans
    [0, L-1] and includes every integer layer index.
    """
    if feature_class not in CLASS_GROUPS:
        raise ValueError(f"unknown feature class {feature_class!r}")
    members = [s for s in summaries if s.feature_class in CLASS_GROUPS[feature_class]]
    if not members:
        raise EmptyClass(f"no features of class {feature_class!r}")
    n_layers = {s.n_layers for s in members}
    if len(n_layers) != 1:
        raise ValueError(f"summaries disagree on the layer count: {sorted(n_layers)}")
    L = n_layers.pop()
    pooled = [b for s in members for b in s.best_layer_per_fold if b is not None]
    if not pooled:
        raise EmptyClass(f"no defined best layers for class {feature_class!r}")
    counts = np.bincount(pooled, minlength=L)
    grid = np.linspace(0.0, L - 1, points_per_layer * max(L - 1, 1) + 1)
    h = scott_bandwidth(pooled) if len(pooled) > 1 else BANDWIDTH_FLOOR
    density = kde(pooled, grid, h)
    return LayerHistogram(feature_class, counts.tolist(), grid.tolist(), density.tolist(), h)
