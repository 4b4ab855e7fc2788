import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from bgenergy.errors import AnalysisError
from bgenergy.stats import (
    _u_counts,
    box_summary,
    compare_groups,
    descriptive,
    holm_adjust,
    iqr_filter,
    looks_normal,
    mann_whitney_u,
    rankdata,
    welch_t_test,
)


def test_descriptive_small():
    d = descriptive([1, 2, 3])
    assert (d.mean, d.median, d.sd, d.n) == (2.0, 2.0, 1.0, 3)


def test_descriptive_single_value():
    d = descriptive([7])
    assert d.mean == d.median == 7 and d.sd == 0 and not d.sd_defined


def test_descriptive_empty():
    with pytest.raises(AnalysisError):
        descriptive([])


def test_rankdata_ties():
    assert list(rankdata([10, 20, 10, 30])) == [1.5, 3.0, 1.5, 4.0]


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
def test_rankdata_matches_reference(xs):
    assert np.array_equal(rankdata(xs), sps.rankdata(xs))


@pytest.mark.parametrize("m,n", [(1, 1), (3, 4), (5, 5), (8, 12)])
def test_u_distribution_counts(m, n):
    counts = _u_counts(m, n)
    assert len(counts) == m * n + 1
    assert sum(counts) == math.comb(m + n, m)
    assert counts == counts[::-1]  # symmetric about mn/2


def test_identical_groups_are_not_different():
    r = mann_whitney_u([5.0] * 6, [5.0] * 6)
    assert r.p_value == 1.0 and r.degenerate
    r = compare_groups([5.0] * 6, [5.0] * 6)
    assert r.p_value == 1.0


def test_constant_groups_with_different_means():
    r = welch_t_test([1.0, 1.0, 1.0], [2.0, 2.0])
    assert r.p_value == 0.0 and r.degenerate and r.statistic == -math.inf


def test_minimum_sizes():
    with pytest.raises(AnalysisError):
        welch_t_test([1.0], [1.0, 2.0])
    with pytest.raises(AnalysisError):
        mann_whitney_u([], [1.0])
    with pytest.raises(AnalysisError):
        compare_groups([1.0], [1.0, 2.0])
    with pytest.raises(AnalysisError):
        mann_whitney_u([1.0, 1.0], [1.0, 2.0], method="exact")
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [2.0], method="bootstrap")


def test_method_selection():
    rng = np.random.default_rng(1)
    q = sps.norm.ppf((np.arange(30) + 0.5) / 30)
    normal_a, normal_b = q, q + 1.0
    assert compare_groups(normal_a, normal_b).method == "welch"
    skewed = rng.exponential(1, 30) ** 3
    assert compare_groups(skewed, normal_b).method.startswith("mann_whitney")
    assert not looks_normal([1.0, 2.0])
    assert not looks_normal([3.0] * 10)


@pytest.mark.filterwarnings("ignore:Precision loss")
def test_welch_df_survives_tiny_variance():
    # One constant group: the degrees of freedom collapse to the other group's n - 1.
    res = welch_t_test([0.0, 0.0], [0.0, 0.0, 1.2932932936588896e-102])
    assert res.df == pytest.approx(2.0)
    assert res.statistic == pytest.approx(-1.0)
    assert res.p_value == pytest.approx(2 * sps.t.sf(1.0, 2), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(
    a=st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=25),
    b=st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=25),
)
def test_welch_against_reference(a, b):
    ours = welch_t_test(a, b)
    if ours.degenerate:
        return
    # The reference squares the per-group variance terms directly; skip inputs where that underflows.
    terms = [np.var(x, ddof=1) / len(x) for x in (a, b)]
    assume(all(v == 0 or v * v > np.finfo(float).tiny for v in terms))
    ref = sps.ttest_ind(a, b, equal_var=False)
    if not np.isfinite(ref.pvalue):
        return
    assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(
    a=st.lists(st.integers(0, 40).map(float), min_size=1, max_size=15),
    b=st.lists(st.integers(0, 40).map(float), min_size=1, max_size=15),
)
def test_mann_whitney_against_reference(a, b):
    ours = mann_whitney_u(a, b)
    if ours.degenerate:
        return
    ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="auto")
    assert ours.statistic == ref.statistic
    assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)


def test_holm():
    assert holm_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])
    assert holm_adjust([]) == []
    assert holm_adjust([0.9, 0.8]) == [1.0, 1.0]


def test_box_summary():
    b = box_summary([1, 2, 3, 4, 5, 6, 7, 8, 100])
    assert (b.q1, b.median, b.q3) == (3.0, 5.0, 7.0)
    assert (b.lo_whisker, b.hi_whisker) == (1.0, 8.0)
    assert b.outliers == (100.0,)
    with pytest.raises(AnalysisError):
        box_summary([])


def test_iqr_filter():
    assert iqr_filter([1, 2, 3, 4, 5, 6, 7, 8, 100]) == [1, 2, 3, 4, 5, 6, 7, 8]
    assert iqr_filter([]) == []
