import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitlogit import Dataset, HyperParams, SplitFit, diversity_penalty
from splitlogit.diversity import (
    DiversityReport,
    correctness_matrix,
    diversity_report,
    entropy_measure,
    generalized_diversity,
    kw_variance,
    overlap,
    pairwise_measures,
)

from conftest import make_data


# ---------------------------------------------------------------- oracles

def pairwise_oracle(c):
    """Enumerate ordered model pairs per input, in exact arithmetic."""
    n, G = c.shape
    dis = df = Fraction(0)
    for i in range(n):
        d = f = 0
        for g, h in permutations(range(G), 2):
            d += c[i, g] != c[i, h]
            f += (not c[i, g]) and (not c[i, h])
        dis += Fraction(d, G * (G - 1))
        df += Fraction(f, G * (G - 1))
    return dis / n, df / n


def gd_oracle(counts, G):
    n = len(counts)
    prob = {g: Fraction(sum(1 for l in counts if l == g), n) for g in range(G + 1)}
    num = sum(Fraction(g * (g - 1), G * (G - 1)) * prob[g] for g in range(1, G + 1))
    den = sum(Fraction(g, G) * prob[g] for g in range(1, G + 1))
    return 1 - num / den


# ---------------------------------------------------------------- entropy

def test_entropy_examples():
    assert entropy_measure([5], 10)[1] == 1.0
    assert entropy_measure([0, 10], 10)[1] == 0.0
    assert entropy_measure([0, 3], 3)[1] == 0.0
    assert entropy_measure([1], 3)[1] == 1.0


def test_entropy_needs_two_models():
    with pytest.raises(ValueError):
        entropy_measure([1], 1)
    with pytest.raises(ValueError):
        entropy_measure([4], 3)


# ---------------------------------------------------------------- pairwise

def test_pairwise_examples():
    assert pairwise_measures(np.ones((5, 4), bool)) == (0.0, 0.0)
    c = np.column_stack([np.ones(6, bool), np.zeros(6, bool)])
    assert pairwise_measures(c) == (1.0, 0.0)
    dis, df = pairwise_measures(np.array([[1, 1, 0], [0, 0, 1]], bool))
    assert dis == 2 / 3 and df == 1 / 6


@given(st.integers(0, 100_000))
@settings(max_examples=50)
def test_pairwise_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    c = rng.random((7, int(rng.integers(2, 6)))) < rng.random()
    dis, df = pairwise_measures(c)
    rd, rf = pairwise_oracle(c)
    assert dis == pytest.approx(float(rd), abs=1e-15)
    assert df == pytest.approx(float(rf), abs=1e-15)


def test_pair_events_partition():
    rng = np.random.default_rng(0)
    c = rng.random((20, 5)) < 0.6
    G = 5
    for row in c:
        both_right = sum(row[g] and row[h] for g, h in permutations(range(G), 2))
        both_wrong = sum((not row[g]) and (not row[h]) for g, h in permutations(range(G), 2))
        disagree = sum(row[g] != row[h] for g, h in permutations(range(G), 2))
        assert both_right + both_wrong + disagree == G * (G - 1)


# ---------------------------------------------------------------- KW

def test_kw_examples():
    assert kw_variance([0, 0], 4) == 0.0
    assert kw_variance([1], 2) == 0.25


def test_kw_dis_identity_on_random_matrices():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        G = int(rng.integers(2, 30))
        c = rng.random((int(rng.integers(1, 50)), G)) < rng.random()
        dis, _ = pairwise_measures(c)
        kw = kw_variance(c.sum(axis=1), G)
        exact = Fraction(G - 1, 2 * G) * Fraction(dis)
        assert kw == pytest.approx((G - 1) / (2 * G) * dis, rel=1e-14, abs=1e-16)
        worst = max(worst, abs(kw - float(exact)))
    assert worst < 1e-15


# ---------------------------------------------------------------- GD

def test_gd_examples():
    assert generalized_diversity([3, 3, 3], 3) == 0.0
    assert generalized_diversity([1, 1], 2) == 1.0
    assert generalized_diversity([1, 2, 3], 3) == pytest.approx(1 / 3, abs=1e-15)


def test_gd_undefined_when_nothing_correct():
    assert math.isnan(generalized_diversity([0, 0, 0], 4))


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_gd_matches_exact_oracle(counts):
    if not any(counts):
        return
    assert generalized_diversity(counts, 6) == pytest.approx(float(gd_oracle(counts, 6)), abs=1e-14)


# ---------------------------------------------------------------- permutation invariance

@given(st.integers(0, 100_000))
@settings(max_examples=30)
def test_measures_invariant_to_model_order(seed):
    rng = np.random.default_rng(seed)
    c = rng.random((15, 5)) < 0.7
    perm = rng.permutation(5)
    a, b = c, c[:, perm]
    la, lb = a.sum(1), b.sum(1)
    assert entropy_measure(la, 5)[1] == entropy_measure(lb, 5)[1]
    assert pairwise_measures(a) == pairwise_measures(b)
    assert kw_variance(la, 5) == kw_variance(lb, 5)
    assert generalized_diversity(la, 5) == generalized_diversity(lb, 5) or \
        (math.isnan(generalized_diversity(la, 5)) and math.isnan(generalized_diversity(lb, 5)))


# ---------------------------------------------------------------- overlap

def test_overlap_examples():
    assert overlap(np.array([[1.0, 0], [0, 2.0]])) == 0.5
    assert overlap(np.array([[1.0, 3.0], [0, 0], [2.0, -1.0]])) == 1.0
    B = np.array([[1, 1, 1, 1], [0, 0, 1, 0], [1, 0, 1, 0], [0, 0, 0, 0]], float)
    assert overlap(B) == pytest.approx((1 + 0.25 + 0.5) / 3, abs=1e-15)
    assert math.isnan(overlap(np.zeros((3, 2))))


@given(st.integers(0, 100_000))
@settings(max_examples=50)
def test_overlap_range_and_disjointness(seed):
    rng = np.random.default_rng(seed)
    G = int(rng.integers(2, 6))
    B = rng.standard_normal((10, G)) * (rng.random((10, G)) < 0.3)
    ov = overlap(B)
    if math.isnan(ov):
        assert not B.any()
        return
    assert 1 / G - 1e-15 <= ov <= 1.0
    assert (ov == 1 / G) == (diversity_penalty(B) == 0.0)


# ---------------------------------------------------------------- report

def _fit(b0, B, d):
    return SplitFit.from_standardized(np.asarray(b0, float), np.asarray(B, float), d,
                                      HyperParams(g=len(b0)))


def test_correctness_uses_each_models_own_prediction():
    d = make_data(n=30, p=2, seed=0)
    f = _fit([0.0, 0.0], [[5.0, -5.0], [0.0, 0.0]], d)
    c = correctness_matrix(f, d.x, d.y, original=False)
    assert np.all(c[:, 0] != c[:, 1])  # opposite models always disagree


def test_report_consistency():
    d = make_data(n=60, p=4, seed=2)
    rng = np.random.default_rng(2)
    f = _fit(rng.normal(0, 0.2, 3), rng.normal(0, 1, (4, 3)), d)
    rep = diversity_report(f, d.x, d.y, original=False)
    assert rep.kw == pytest.approx((3 - 1) / 6 * rep.dis, rel=1e-14)
    assert rep.mr_individual_mean == pytest.approx(np.mean(rep.per_model_mr))
    rec = rep.to_record()
    assert rec["mr_model_3"] == rep.per_model_mr[2] and "per_model_mr" not in rec
    for v in (rep.em, rep.dis, rep.df, rep.gd):
        assert 0 <= v <= 1


def test_report_needs_two_models():
    d = make_data(n=10, p=2)
    with pytest.raises(ValueError):
        diversity_report(_fit([0.0], [[1.0], [0.0]], d), d.x, d.y)
