import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from goprobe.probe import FeatureSummary
from goprobe.stats import (
    AllZeroDifferences,
    ConstantInput,
    EmptyClass,
    EmptySample,
    best_layer_histogram,
    kde,
    pearson,
    scott_bandwidth,
    wilcoxon_signed_rank,
)

from oracles import gaussian_kde_direct, wilcoxon_enumerate, wilcoxon_meet_in_middle


def test_wilcoxon_five_positive_differences():
    r = wilcoxon_signed_rank([1, 2, 3, 4, 5], alternative="greater")
    assert r.statistic == 15 and r.p_value == 0.03125 and r.method == "exact" and r.n_effective == 5


def test_wilcoxon_antisymmetric_two_sided():
    assert wilcoxon_signed_rank([-2, -1, 1, 2]).p_value == 1.0


def test_wilcoxon_pairs_and_zeros():
    r = wilcoxon_signed_rank([3, 4, 5, 6], [3, 2, 2, 2], alternative="greater")
    assert r.n_effective == 3 and r.p_value == 0.125
    with pytest.raises(AllZeroDifferences):
        wilcoxon_signed_rank([1, 2], [1, 2])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1], alternative="bigger")


def tied_sample(rng: random.Random, n: int) -> list[float]:
    # small integer magnitudes force ties among |d|; zeros get dropped
    return [rng.choice([-1, 1]) * rng.randint(0, 6) * 0.5 for _ in range(n)]


def test_exact_matches_enumeration_up_to_12():
    rng = random.Random(0)
    checked = 0
    while checked < 200:
        n = rng.randint(1, 12)
        d = tied_sample(rng, n) if checked % 2 else [rng.gauss(0.3, 1) for _ in range(n)]
        if not any(d):
            continue
        for alt in ("two-sided", "greater", "less"):
            p = wilcoxon_signed_rank(d, alternative=alt, method="exact").p_value
            assert abs(p - wilcoxon_enumerate(d, alt)) <= 1e-10
        checked += 1


def test_exact_matches_meet_in_middle_at_30():
    rng = random.Random(1)
    for trial in range(3):
        d = tied_sample(rng, 30) if trial else [rng.gauss(0.4, 1) for _ in range(30)]
        for alt in ("two-sided", "greater", "less"):
            p = wilcoxon_signed_rank(d, alternative=alt, method="exact").p_value
            assert abs(p - wilcoxon_meet_in_middle(d, alt)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-8, 8), min_size=1, max_size=16).filter(any))
def test_exact_complementarity(d):
    p = wilcoxon_signed_rank(d, alternative="greater", method="exact").p_value
    q = wilcoxon_signed_rank([-x for x in d], alternative="greater", method="exact").p_value
    # both tails include the observed value, so the pair covers everything at least once
    assert p + q >= 1.0 - 1e-12
    p_ge = p
    p_le = wilcoxon_signed_rank(d, alternative="less", method="exact").p_value
    assert q == pytest.approx(p_le, abs=1e-12)
    assert p_ge + p_le - 1.0 >= -1e-12


def test_approximation_tracks_exact_for_20_to_25():
    rng = random.Random(2)
    for n in range(20, 26):
        for _ in range(20):
            d = [rng.gauss(0.2, 1) for _ in range(n)]
            for alt in ("two-sided", "greater", "less"):
                e = wilcoxon_signed_rank(d, alternative=alt, method="exact")
                a = wilcoxon_signed_rank(d, alternative=alt, method="approx")
                assert a.method == "normal-approximation"
                assert abs(e.p_value - a.p_value) <= 0.01


def test_auto_method_threshold():
    rng = random.Random(3)
    assert wilcoxon_signed_rank([rng.gauss(0, 1) for _ in range(25)]).method == "exact"
    assert wilcoxon_signed_rank([rng.gauss(0, 1) for _ in range(26)]).method == "normal-approximation"
    big = wilcoxon_signed_rank([rng.gauss(0, 1) + 0.5 for _ in range(400)], alternative="greater")
    assert 0.0 <= big.p_value < 1e-6


def test_pearson_examples():
    x = [1.0, 2.0, 3.0, 4.5]
    assert pearson(x, x) == 1.0
    assert pearson(x, [-2 * v + 3 for v in x]) == -1.0
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(3 / math.sqrt(2 * 14 / 3), abs=1e-14)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198050606, abs=1e-10)
    with pytest.raises(ConstantInput):
        pearson([1, 1, 1], [1, 2, 3])


pairs = st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=20).filter(
    lambda ps: max(p[0] for p in ps) - min(p[0] for p in ps) > 1e-3 and max(p[1] for p in ps) - min(p[1] for p in ps) > 1e-3
)


@settings(max_examples=100, deadline=None)
@given(pairs, st.floats(-5, 5).filter(lambda a: abs(a) > 0.1), st.floats(-5, 5))
def test_pearson_affine_property(ps, a, b):
    x = [p[0] for p in ps]
    y = [p[1] for p in ps]
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert pearson([a * v + b for v in x], y) == pytest.approx(math.copysign(1, a) * r, abs=1e-9)


def test_kde_hand_sum():
    samples = [0.0, 1.0, 1.5, 3.0, -2.0]
    got = kde(samples, [0.7], bandwidth=1.0)[0]
    hand = sum(math.exp(-0.5 * (0.7 - s) ** 2) for s in samples) / (5 * math.sqrt(2 * math.pi))
    assert got == pytest.approx(hand, rel=1e-14)
    assert got == pytest.approx(gaussian_kde_direct(samples, 0.7, 1.0), rel=1e-14)


def test_kde_default_bandwidth_is_scott():
    samples = [0.0, 1.0, 2.0, 4.0]
    h = float(np.std(samples, ddof=1)) * 4 ** -0.2
    assert scott_bandwidth(samples) == pytest.approx(h)
    assert kde(samples, [1.3])[0] == pytest.approx(gaussian_kde_direct(samples, 1.3, h))


def test_kde_symmetry_and_point_mass():
    grid = np.linspace(-3, 3, 61)
    dens = kde([-1.0, -0.2, 0.2, 1.0], grid)
    assert np.allclose(dens, dens[::-1])
    assert (dens >= 0).all()
    point = kde([2.0, 2.0, 2.0], np.linspace(0, 4, 41))
    assert int(np.argmax(point)) == 20
    with pytest.raises(EmptySample):
        kde([], [0.0])
    with pytest.raises(ValueError):
        kde([1.0, 2.0], [0.0], bandwidth=0.0)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(0)
    samples = rng.normal(2, 1.5, 40)
    grid = np.linspace(-15, 20, 7001)
    dens = kde(samples, grid)
    area = float(np.sum((dens[1:] + dens[:-1]) * np.diff(grid)) / 2)
    assert abs(area - 1.0) <= 1e-3


def summary(name, cls, best, n_layers=7):
    return FeatureSummary(name, cls, [0.5] * n_layers, 0.5, 0, best, False, 0)


def test_best_layer_histogram_counts():
    sums = [summary("keyword.ko", "keyword", [3] * 10), summary("keyword.aji", "keyword", [2, 3] * 5)]
    h = best_layer_histogram(sums, "keyword")
    assert sum(h.counts) == 20 and h.counts[3] == 15 and h.mode == 3
    assert h.grid[0] == 0.0 and h.grid[-1] == 6.0 and 3.0 in h.grid
    peak = h.grid[int(np.argmax(h.density))]
    assert abs(peak - 3.0) < 0.3


def test_histogram_all_equal_is_unimodal_at_layer():
    h = best_layer_histogram([summary("pattern.cut", "pattern", [4] * 10)], "pattern")
    dens = np.array(h.density)
    peak = int(np.argmax(dens))
    assert h.grid[peak] == 4.0
    assert (np.diff(dens[:peak + 1]) >= 0).all() and (np.diff(dens[peak:]) <= 0).all()


def test_histogram_control_pools_function_and_content():
    sums = [summary("function.the", "function", [1] * 10), summary("content.stones", "content", [5] * 10)]
    assert sum(best_layer_histogram(sums, "control").counts) == 20
    with pytest.raises(EmptyClass):
        best_layer_histogram(sums, "keyword")
    with pytest.raises(ValueError):
        best_layer_histogram(sums + [summary("content.x", "content", [0] * 10, n_layers=3)], "control")
