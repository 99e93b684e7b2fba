"""Linear probes: grouped k-fold splits, L2 logistic regression, ROC AUC.

Probes minimise mean binary cross-entropy plus ``lam / 2 * ||w||^2`` on
inputs standardised with training-fold statistics (intercept unpenalised).
When a layer has more dimensions than training rows the problem is solved in
the row space of the standardised data: with ``Z Z^T = U diag(e) U^T`` the
substitution ``w = Z^T U diag(e^-1/2) v`` gives an equivalent problem on the
n x r design ``U diag(e^1/2)`` with penalty ``lam / 2 * ||v||^2``. The
minimiser is the same, it is just much cheaper to reach.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DataError

log = logging.getLogger(__name__)

EIGEN_RTOL = 1e-10


class TooFewGroups(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class SingleClass(DataError):
    pass


class AlignmentError(DataError):
    pass


class IncompleteGrid(DataError):
    pass


# -- folds ------------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: np.ndarray

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.fold_of == fold
        return ~test, test


def assign_folds(groups: Sequence, k: int = 10, seed: int = 0, by_group: bool = True) -> FoldAssignment:
    """Shuffle games with ``seed`` and deal them round-robin into ``k`` folds.

    With ``by_group=False`` individual rows are dealt instead, ignoring games.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    groups = np.asarray(groups)
    rng = np.random.default_rng(seed)
    if by_group:
        unique, inverse = np.unique(groups, return_inverse=True)
        if len(unique) < k:
            raise TooFewGroups(f"{len(unique)} distinct games cannot fill {k} folds")
        perm = rng.permutation(len(unique))
        fold_of_group = np.empty(len(unique), dtype=np.int64)
        fold_of_group[perm] = np.arange(len(unique)) % k
        fold_of = fold_of_group[inverse]
    else:
        if len(groups) < k:
            raise TooFewGroups(f"{len(groups)} rows cannot fill {k} folds")
        perm = rng.permutation(len(groups))
        fold_of = np.empty(len(groups), dtype=np.int64)
        fold_of[perm] = np.arange(len(groups)) % k
    return FoldAssignment(k, fold_of)


# -- ROC AUC ----------------------------------------------------------------


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney estimate of ROC AUC, ties counted as one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC AUC needs both classes")
    r = average_ranks(s)
    u = r[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- logistic regression ----------------------------------------------------


class _Design:
    """Standardised training design, reduced to an isotropic-penalty basis if wide."""

    def __init__(self, train: np.ndarray, test: Optional[np.ndarray] = None):
        train = np.asarray(train, dtype=np.float64)
        self.keep = train.max(axis=0) > train.min(axis=0)
        t = train[:, self.keep]
        self.mean = t.mean(axis=0)
        self.scale = t.std(axis=0)
        z = (t - self.mean) / self.scale
        self.z = z
        self.reduced = z.shape[1] > z.shape[0]
        zt = None
        if test is not None:
            zt = (np.asarray(test, dtype=np.float64)[:, self.keep] - self.mean) / self.scale
        if self.reduced:
            gram = z @ z.T
            evals, vecs = np.linalg.eigh(gram)
            sel = evals > EIGEN_RTOL * max(evals[-1], 1e-300)
            self.root = np.sqrt(evals[sel])
            self.u = vecs[:, sel]
            self.phi = self.u * self.root
            self.phi_test = None if zt is None else (zt @ z.T) @ self.u / self.root
        else:
            self.phi = z
            self.phi_test = zt

    def to_weights(self, v: np.ndarray) -> np.ndarray:
        """Map solver coordinates back to weights on the standardised inputs."""
        if not self.reduced:
            return v
        return self.z.T @ (self.u @ (v / self.root))


@dataclass
class _Fit:
    coef: np.ndarray
    intercept: float
    n_iter: int
    converged: bool
    grad_max: float


def _fit(phi: np.ndarray, y: np.ndarray, lam: float, tol: float, max_iter: int) -> _Fit:
    n, d = phi.shape
    sign = np.where(np.asarray(y).astype(bool), 1.0, -1.0)

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        v = theta[:d]
        m = -sign * (phi @ v + theta[d])
        loss = np.logaddexp(0.0, m).mean() + 0.5 * lam * (v @ v)
        dz = -sign * expit(m) / n
        grad = np.empty_like(theta)
        grad[:d] = phi.T @ dz + lam * v
        grad[d] = dz.sum()
        return loss, grad

    res = minimize(
        objective,
        np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0, "maxcor": 20},
    )
    _, g = objective(res.x)
    gmax = float(np.abs(g).max())
    return _Fit(res.x[:d], float(res.x[d]), int(res.nit), gmax <= tol, gmax)


@dataclass
class LogisticModel:
    weights: np.ndarray  # on standardised, kept dimensions
    intercept: float
    keep: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    n_iter: int
    converged: bool
    grad_max: float

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64)[:, self.keep] - self.mean) / self.scale
        return z @ self.weights + self.intercept

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision_function(x) > 0).astype(int)


def train_logistic(
    x: np.ndarray,
    y: Sequence[int],
    lam: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> LogisticModel:
    """Fit an L2-regularised logistic regression on standardised inputs.

    Hitting ``max_iter`` is not an error; check ``converged``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y).astype(int)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not np.isfinite(x).all():
        raise ValueError("inputs contain non-finite values")
    if len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels contain a single class")
    design = _Design(x)
    fit = _fit(design.phi, y, lam, tol, max_iter)
    return LogisticModel(
        design.to_weights(fit.coef),
        fit.intercept,
        design.keep,
        design.mean,
        design.scale,
        fit.n_iter,
        fit.converged,
        fit.grad_max,
    )


# -- the probe grid ---------------------------------------------------------


@dataclass
class ProbeCell:
    """Outcome of one (feature, layer, fold) probe."""

    feature: str
    feature_class: str
    layer: int
    layer_name: str
    fold: int
    auc: Optional[float]
    status: str  # ok | undefined_auc | degenerate_labels
    trained: bool
    converged: bool = False
    n_iter: int = 0
    n_train: int = 0
    n_test: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def _layer_matrix(acts, name: str, pooling: str) -> np.ndarray:
    data = acts.data[name]
    n = len(data)
    if pooling == "flatten" or data.ndim < 3:
        return data.reshape(n, -1)
    if pooling == "mean":
        return data.reshape(n, data.shape[1], -1).mean(axis=2, dtype=np.float64)
    raise ValueError(f"unknown pooling {pooling!r}")


def align_rows(act_keys: np.ndarray, feat_keys: np.ndarray) -> np.ndarray:
    """Row of the activation batch for every feature-matrix row."""
    index: dict[tuple[int, int], int] = {}
    for i, (g, m) in enumerate(np.asarray(act_keys).tolist()):
        if (g, m) in index:
            raise AlignmentError(f"activation batch holds position ({g}, {m}) twice")
        index[(g, m)] = i
    rows = np.empty(len(feat_keys), dtype=np.int64)
    for j, (g, m) in enumerate(np.asarray(feat_keys).tolist()):
        try:
            rows[j] = index[(g, m)]
        except KeyError:
            raise AlignmentError(f"no activations for position (game {g}, move {m})") from None
    return rows


def probe_grid(
    acts,
    features,
    folds: FoldAssignment,
    lam: float = 1.0,
    *,
    pooling: str = "flatten",
    tol: float = 1e-5,
    max_iter: int = 1000,
    layers: Optional[Sequence[str]] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> list[ProbeCell]:
    """Train and score one probe per (feature, layer, fold).

    ``acts`` is an :class:`~goprobe.gpac.ActivationBatch`; ``features`` a
    :class:`~goprobe.features.FeatureMatrix` whose rows ``folds`` refers to.
    Results are ordered by feature, then layer, then fold.
    """
    rows = align_rows(acts.keys, features.keys)
    if len(folds.fold_of) != len(features.keys):
        raise AlignmentError("fold assignment length differs from the feature matrix")
    labels = np.asarray(features.values).astype(bool)
    names = list(layers) if layers is not None else acts.names
    cells: dict[tuple[int, int, int], ProbeCell] = {}
    for li, lname in enumerate(names):
        x_all = _layer_matrix(acts, lname, pooling)[rows]
        if not np.isfinite(x_all).all():
            raise DataError(f"layer {lname} contains non-finite activations")
        for fold in range(folds.k):
            train, test = folds.train_test(fold)
            if not test.any():
                raise DataError(f"fold {fold} is empty")
            design = None
            for fi, fname in enumerate(features.names):
                ytr, yte = labels[train, fi], labels[test, fi]
                base = dict(
                    feature=fname,
                    feature_class=features.classes[fi],
                    layer=li,
                    layer_name=lname,
                    fold=fold,
                    n_train=int(train.sum()),
                    n_test=int(test.sum()),
                )
                if ytr.all() or not ytr.any():
                    cells[fi, li, fold] = ProbeCell(auc=None, status="degenerate_labels", trained=False, **base)
                    continue
                if design is None:
                    design = _Design(x_all[train], x_all[test])
                fit = _fit(design.phi, ytr, lam, tol, max_iter)
                if yte.all() or not yte.any():
                    auc, status = None, "undefined_auc"
                else:
                    auc, status = roc_auc(design.phi_test @ fit.coef + fit.intercept, yte), "ok"
                cells[fi, li, fold] = ProbeCell(
                    auc=auc,
                    status=status,
                    trained=True,
                    converged=fit.converged,
                    n_iter=fit.n_iter,
                    **base,
                )
        if progress:
            progress(f"layer {lname} done")
    return [cells[key] for key in sorted(cells)]


def write_results(cells: Iterable[ProbeCell], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in cells:
            f.write(json.dumps(c.to_json(), sort_keys=True) + "\n")


def read_results(path: str | Path) -> list[ProbeCell]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                try:
                    out.append(ProbeCell(**json.loads(line)))
                except (TypeError, json.JSONDecodeError) as e:
                    raise DataError(f"{path}:{lineno}: bad result record: {e}") from e
    return out


# -- summaries --------------------------------------------------------------


@dataclass
class ProbeResult:
    """Per (feature, layer): fold AUCs and their mean over defined folds."""

    feature: str
    layer: int
    fold_auc: list[Optional[float]]
    mean_auc: Optional[float]


@dataclass
class FeatureSummary:
    feature: str
    feature_class: str
    layer_mean_auc: list[Optional[float]]
    max_mean_auc: Optional[float]
    best_layer: Optional[int]
    best_layer_per_fold: list[Optional[int]]
    degenerate: bool
    undefined_folds: int

    @property
    def n_layers(self) -> int:
        return len(self.layer_mean_auc)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(sum(vals) / len(vals)) if vals else None


def _argmax_low(values: Sequence[Optional[float]]) -> Optional[int]:
    best = None
    for i, v in enumerate(values):
        if v is not None and (best is None or v > values[best]):
            best = i
    return best


def _grid(cells: Sequence[ProbeCell]) -> tuple[int, int, dict[tuple[int, int], ProbeCell]]:
    if not cells:
        raise IncompleteGrid("no results")
    names = {c.feature for c in cells}
    if len(names) != 1:
        raise ValueError(f"results span several features: {sorted(names)}")
    grid = {}
    for c in cells:
        if (c.layer, c.fold) in grid:
            raise IncompleteGrid(f"duplicate cell layer {c.layer} fold {c.fold}")
        grid[c.layer, c.fold] = c
    n_layers = max(c.layer for c in cells) + 1
    k = max(c.fold for c in cells) + 1
    missing = [(l, f) for l in range(n_layers) for f in range(k) if (l, f) not in grid]
    if missing:
        raise IncompleteGrid(f"{cells[0].feature}: missing {len(missing)} of {n_layers * k} cells")
    return n_layers, k, grid


def aggregate(cells: Sequence[ProbeCell]) -> list[ProbeResult]:
    """Collapse one feature's cells into per-layer results."""
    n_layers, k, grid = _grid(cells)
    out = []
    for l in range(n_layers):
        aucs = [grid[l, f].auc for f in range(k)]
        out.append(ProbeResult(cells[0].feature, l, aucs, _mean(aucs)))
    return out


def summarize_feature(cells: Sequence[ProbeCell]) -> FeatureSummary:
    """Max over layers of the fold-mean AUC, and the best layer of every fold.

    Ties go to the lowest layer index.
    """
    n_layers, k, grid = _grid(cells)
    per_layer = aggregate(cells)
    means = [r.mean_auc for r in per_layer]
    best = _argmax_low(means)
    best_per_fold = [_argmax_low([grid[l, f].auc for l in range(n_layers)]) for f in range(k)]
    return FeatureSummary(
        feature=cells[0].feature,
        feature_class=cells[0].feature_class,
        layer_mean_auc=means,
        max_mean_auc=None if best is None else means[best],
        best_layer=best,
        best_layer_per_fold=best_per_fold,
        degenerate=all(c.status == "degenerate_labels" for c in cells),
        undefined_folds=sum(1 for c in cells if c.auc is None),
    )


def summarize_all(cells: Sequence[ProbeCell]) -> list[FeatureSummary]:
    by_feature: dict[str, list[ProbeCell]] = {}
    for c in cells:
        by_feature.setdefault(c.feature, []).append(c)
    return [summarize_feature(v) for v in by_feature.values()]
