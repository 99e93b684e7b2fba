import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.linear_model import LogisticRegression

from goprobe.features import FeatureMatrix
from goprobe.gpac import ActivationBatch, LayerInfo
from goprobe.probe import (
    AlignmentError,
    DegenerateLabels,
    IncompleteGrid,
    ProbeCell,
    SingleClass,
    TooFewGroups,
    aggregate,
    assign_folds,
    probe_grid,
    read_results,
    roc_auc,
    summarize_all,
    summarize_feature,
    train_logistic,
    write_results,
)

from oracles import pairwise_auc


# -- folds -------------------------------------------------------------------


def test_one_position_per_game_gives_equal_folds():
    folds = assign_folds(np.arange(100), k=10, seed=3)
    assert np.bincount(folds.fold_of).tolist() == [10] * 10


def test_game_positions_share_a_fold():
    groups = np.r_[np.zeros(50, int), np.arange(1, 20).repeat(2)]
    folds = assign_folds(groups, k=10, seed=1)
    assert len(set(folds.fold_of[:50])) == 1
    for g in range(1, 20):
        assert len(set(folds.fold_of[groups == g])) == 1
    assert all((folds.fold_of == f).any() for f in range(10))


def test_folds_deterministic_and_validated():
    groups = np.arange(30) % 13
    assert np.array_equal(assign_folds(groups, 5, 7).fold_of, assign_folds(groups, 5, 7).fold_of)
    assert not np.array_equal(assign_folds(groups, 5, 7).fold_of, assign_folds(groups, 5, 8).fold_of)
    with pytest.raises(TooFewGroups):
        assign_folds(np.arange(5) % 3, k=4)
    with pytest.raises(ValueError):
        assign_folds(groups, k=1)
    rows = assign_folds(np.zeros(20, int), k=4, by_group=False)
    assert np.bincount(rows.fold_of).tolist() == [5] * 4


# -- AUC ---------------------------------------------------------------------


def test_auc_examples():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert roc_auc([0, 1, 2, 3], [0, 0, 1, 1]) == 1.0
    assert roc_auc([2, 2, 2, 2], [0, 1, 0, 1]) == 0.5
    with pytest.raises(SingleClass):
        roc_auc([1, 2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([np.nan, 1], [0, 1])


@st.composite
def scored(draw):
    n = draw(st.integers(2, 60))
    levels = draw(st.integers(1, 8))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)))
    scores = draw(st.lists(st.integers(0, levels), min_size=n, max_size=n))
    return np.array(scores, float) / 3.0, np.array(labels)


@settings(max_examples=200, deadline=None)
@given(scored())
def test_auc_matches_pairwise_oracle(data):
    s, y = data
    a = roc_auc(s, y)
    assert abs(a - pairwise_auc(s.tolist(), y.tolist())) <= 1e-12
    assert abs(a + roc_auc(-s, y) - 1.0) <= 1e-12
    assert roc_auc(np.exp(3 * s) + 1, y) == pytest.approx(a, abs=1e-12)


# -- logistic regression --------------------------------------------------------


def test_symmetric_1d_problem():
    x = np.r_[-np.ones(20), np.ones(20)]
    y = np.r_[np.zeros(20), np.ones(20)].astype(int)
    m = train_logistic(x, y, lam=0.01, tol=1e-10)
    assert m.weights[0] > 0
    assert abs(m.intercept) < 1e-6
    assert m.converged


def test_separable_2d_matches_independent_optimizer():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(-2, 0.5, (30, 2)), rng.normal(2, 0.5, (30, 2))]
    y = np.r_[np.zeros(30), np.ones(30)].astype(int)
    lam = 1e-3
    m = train_logistic(x, y, lam=lam, tol=1e-10, max_iter=10000)
    assert (m.predict(x) == y).all()
    z = (x - x.mean(0)) / x.std(0)
    ref = LogisticRegression(C=1.0 / (len(y) * lam), tol=1e-12, max_iter=100000).fit(z, y)
    assert np.allclose(m.weights, ref.coef_[0], atol=1e-4)
    assert m.intercept == pytest.approx(ref.intercept_[0], abs=1e-4)


def test_wide_problem_matches_primal_optimizer():
    # more dimensions than rows triggers the Gram-matrix reduction
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 120))
    y = (x[:, :3].sum(1) + 0.3 * rng.standard_normal(40) > 0).astype(int)
    lam = 0.05
    m = train_logistic(x, y, lam=lam, tol=1e-10, max_iter=10000)
    z = (x - x.mean(0)) / x.std(0)
    ref = LogisticRegression(C=1.0 / (len(y) * lam), tol=1e-12, max_iter=100000).fit(z, y)
    assert np.allclose(m.weights, ref.coef_[0], atol=1e-5)
    assert m.intercept == pytest.approx(ref.intercept_[0], abs=1e-5)
    assert np.allclose(m.decision_function(x), ref.decision_function(z), atol=1e-5)


def test_label_swap_negates_weights():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 4))
    y = (x[:, 0] + rng.standard_normal(50) > 0).astype(int)
    a = train_logistic(x, y, lam=0.1, tol=1e-10)
    b = train_logistic(x, 1 - y, lam=0.1, tol=1e-10)
    assert np.allclose(a.weights, -b.weights, atol=1e-9)
    assert a.intercept == pytest.approx(-b.intercept, abs=1e-9)


def test_constant_columns_dropped_and_labels_checked():
    x = np.c_[np.ones(10), np.arange(10.0)]
    m = train_logistic(x, (np.arange(10) > 4).astype(int), lam=0.1)
    assert m.keep.tolist() == [False, True]
    with pytest.raises(DegenerateLabels):
        train_logistic(x, np.zeros(10, int))
    with pytest.raises(ValueError):
        train_logistic(np.array([[np.inf], [0.0]]), [0, 1])


def test_iteration_cap_is_reported_not_raised():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((60, 5))
    y = (x[:, 0] > 0).astype(int)
    m = train_logistic(x, y, lam=1e-6, tol=1e-12, max_iter=2)
    assert not m.converged and m.n_iter <= 2


# -- grid ----------------------------------------------------------------------


def toy_batch(n_games=12, per_game=5, seed=0, widths=(3, 8)):
    rng = np.random.default_rng(seed)
    keys = np.array([(g, m) for g in range(n_games) for m in range(1, per_game + 1)])
    layers = [LayerInfo("input", (widths[0],))] + [LayerInfo(f"l{i}", (w,)) for i, w in enumerate(widths[1:], 1)]
    data = {l.name: rng.standard_normal((len(keys), *l.shape)).astype(np.float32) for l in layers}
    return ActivationBatch(layers, keys, data)


def test_grid_size_and_order():
    acts = toy_batch()
    y = (acts.data["l1"][:, 0] > 0).astype(np.uint8)
    fm = FeatureMatrix(["pattern.cut"], acts.keys, y[:, None])
    folds = assign_folds(fm.games, k=3, seed=0)
    cells = probe_grid(acts, fm, folds, 1.0)
    assert len(cells) == 6
    assert [(c.layer, c.fold) for c in cells] == [(l, f) for l in range(2) for f in range(3)]
    assert all(c.trained for c in cells)


def test_grid_recovers_planted_layer():
    acts = toy_batch(n_games=40, per_game=10, seed=4, widths=(5, 20, 20))
    rng = np.random.default_rng(9)
    w = rng.standard_normal(20)
    y = (acts.data["l1"] @ w + 0.2 * rng.standard_normal(len(acts)) > 0).astype(np.uint8)
    fm = FeatureMatrix(["keyword.ko"], acts.keys, y[:, None])
    cells = probe_grid(acts, fm, assign_folds(fm.games, 10, 0), 0.01)
    s = summarize_feature(cells)
    assert s.layer_mean_auc[1] >= 0.95
    assert abs(s.layer_mean_auc[2] - 0.5) <= 0.05
    assert s.best_layer == 1 and s.best_layer_per_fold.count(1) >= 8


def test_degenerate_feature_is_flagged():
    acts = toy_batch()
    fm = FeatureMatrix(["pattern.eye", "pattern.cut"], acts.keys, np.c_[np.zeros(len(acts)), np.arange(len(acts)) % 2])
    cells = probe_grid(acts, fm, assign_folds(fm.games, 3, 0))
    eye = [c for c in cells if c.feature == "pattern.eye"]
    assert all(c.status == "degenerate_labels" and not c.trained and c.auc is None for c in eye)
    s = summarize_all(cells)
    assert {x.feature: x.degenerate for x in s} == {"pattern.eye": True, "pattern.cut": False}


def test_undefined_fold_auc_is_excluded_from_mean():
    acts = toy_batch(n_games=6, per_game=4)
    folds = assign_folds(acts.keys[:, 0], k=3, seed=0)
    y = np.zeros(len(acts), np.uint8)
    # positives only in two folds' games
    y[(folds.fold_of != 0) & (acts.keys[:, 1] % 2 == 0)] = 1
    fm = FeatureMatrix(["keyword.ko"], acts.keys, y[:, None])
    cells = probe_grid(acts, fm, folds)
    fold0 = [c for c in cells if c.fold == 0]
    assert all(c.status == "undefined_auc" and c.trained for c in fold0)
    s = summarize_feature(cells)
    assert s.undefined_folds == 2  # one per layer
    res = aggregate(cells)
    for r in res:
        assert r.mean_auc == pytest.approx(np.mean(r.fold_auc[1:]))


def test_alignment_errors():
    acts = toy_batch()
    fm = FeatureMatrix(["pattern.cut"], acts.keys + [0, 100], (np.arange(len(acts)) % 2)[:, None])
    with pytest.raises(AlignmentError):
        probe_grid(acts, fm, assign_folds(fm.games, 3, 0))


def test_train_test_separation():
    acts = toy_batch(n_games=15, per_game=6, seed=2)
    rng = np.random.default_rng(1)
    y = (acts.data["l1"][:, :2].sum(1) + rng.standard_normal(len(acts)) > 0).astype(np.uint8)
    fm = FeatureMatrix(["keyword.ko"], acts.keys, y[:, None])
    folds = assign_folds(fm.games, 3, 0)
    cells = probe_grid(acts, fm, folds, 0.1, tol=1e-10)
    x = acts.data["l1"].astype(np.float64)
    train, test = folds.train_test(0)
    model = train_logistic(x[train], y[train], lam=0.1, tol=1e-10)
    scores = model.decision_function(x[test])
    cell = next(c for c in cells if c.layer == 1 and c.fold == 0)
    assert cell.auc == pytest.approx(roc_auc(scores, y[test]), abs=1e-9)
    # dropping test rows leaves the fold's model, hence the remaining scores, unchanged
    keep = np.ones(len(acts), bool)
    keep[np.flatnonzero(test)[:3]] = False
    sub = acts.select(np.flatnonzero(keep))
    fm2 = FeatureMatrix(fm.names, fm.keys[keep], fm.values[keep])
    folds2 = type(folds)(3, folds.fold_of[keep])
    cell2 = next(c for c in probe_grid(sub, fm2, folds2, 0.1, tol=1e-10) if c.layer == 1 and c.fold == 0)
    t2 = test[keep]
    assert cell2.auc == pytest.approx(roc_auc(model.decision_function(x[keep][t2]), y[keep][t2]), abs=1e-9)


def test_grid_determinism_and_json_round_trip(tmp_path):
    acts = toy_batch(seed=5)
    y = np.c_[(acts.data["l1"][:, 0] > 0), (acts.data["input"][:, 1] > 0.3)].astype(np.uint8)
    fm = FeatureMatrix(["pattern.cut", "keyword.cut"], acts.keys, y)
    folds = assign_folds(fm.games, 4, 2)
    a = probe_grid(acts, fm, folds)
    b = probe_grid(acts, fm, folds, layers=list(reversed(acts.names)))
    assert [c.auc for c in a] == [c.auc for c in probe_grid(acts, fm, folds)]
    # layer order of evaluation does not change the per-cell numbers
    by_name = {(c.feature, c.layer_name, c.fold): c.auc for c in b}
    assert all(by_name[c.feature, c.layer_name, c.fold] == c.auc for c in a)
    write_results(a, tmp_path / "r.jsonl")
    assert read_results(tmp_path / "r.jsonl") == a


# -- summaries -----------------------------------------------------------------


def cells_from(aucs, feature="keyword.ko"):
    """aucs[layer][fold]"""
    return [
        ProbeCell(feature, "keyword", l, f"l{l}", f, a, "ok", True)
        for l, row in enumerate(aucs)
        for f, a in enumerate(row)
    ]


def test_summary_examples():
    s = summarize_feature(cells_from([[0.6, 0.6], [0.9, 0.9], [0.7, 0.7]]))
    assert s.max_mean_auc == pytest.approx(0.9) and s.best_layer == 1
    assert s.best_layer_per_fold == [1, 1]
    s = summarize_feature(cells_from([[0.5, 0.6], [0.5, 0.7], [0.5, 0.1]]))
    assert s.best_layer_per_fold == [0, 1]
    assert s.n_layers == 3


def test_incomplete_grid():
    cells = cells_from([[0.6, 0.6], [0.9, 0.9]])
    with pytest.raises(IncompleteGrid):
        summarize_feature(cells[:-1] + [cells[0]])  # a duplicate in place of the last cell
    with pytest.raises(IncompleteGrid):
        summarize_feature([c for c in cells if not (c.layer == 0 and c.fold == 1)])
    with pytest.raises(IncompleteGrid):
        summarize_feature([])
