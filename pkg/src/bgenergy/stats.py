"""Two-sample tests and descriptive statistics for energy samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special
from scipy import stats as _sps

from .errors import AnalysisError


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    p_value: float
    method: str
    df: float | None = None
    degenerate: bool = False


def _clip_p(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TwoSampleResult:
    """Two-sided Welch t-test (unequal variances)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise AnalysisError("Welch t-test needs at least two samples per group")
    va = a.var(ddof=1) / na
    vb = b.var(ddof=1) / nb
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        # Both groups constant: identical means give no evidence, different means are certain.
        p = 1.0 if diff == 0 else 0.0
        return TwoSampleResult(math.copysign(math.inf, diff) if diff else 0.0, p, "welch", None, True)
    t = diff / math.sqrt(se2)
    # Welch-Satterthwaite on the variance shares, so tiny variances do not underflow when squared.
    ra, rb = va / se2, vb / se2
    df = 1.0 / (ra**2 / (na - 1) + rb**2 / (nb - 1))
    # Two-sided tail of Student's t through the regularised incomplete beta. Near t = 0 the
    # argument df/(df+t^2) crowds 1, so use the complement on t^2/(df+t^2) instead.
    t2 = t * t
    if t2 < df:
        p = 1.0 - special.betainc(0.5, df / 2.0, t2 / (df + t2))
    else:
        p = special.betainc(df / 2.0, 0.5, df / (df + t2))
    return TwoSampleResult(float(t), _clip_p(p), "welch", float(df))


def rankdata(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    sorted_x = x[order]
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def tie_counts(values: Sequence[float]) -> np.ndarray:
    _, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    return counts


@lru_cache(maxsize=256)
def _u_counts(m: int, n: int) -> tuple[int, ...]:
    """Number of orderings giving each U in 0..m*n (no ties)."""
    # counts[j][u] for j elements of the second sample, built up one x at a time.
    prev = [[1] for _ in range(n + 1)]  # m = 0: U is always 0
    for i in range(1, m + 1):
        cur = [[1]]  # n = 0
        for j in range(1, n + 1):
            size = i * j + 1
            row = [0] * size
            # last element belongs to x: contributes j to U
            for u, c in enumerate(prev[j]):
                row[u + j] += c
            # last element belongs to y: contributes nothing
            for u, c in enumerate(cur[j - 1]):
                row[u] += c
            cur.append(row)
        prev = cur
    return tuple(prev[n])


def _exact_u_sf(u: int, m: int, n: int) -> float:
    """P(U >= u) under the null, exact."""
    counts = _u_counts(m, n)
    total = math.comb(m + n, m)
    return sum(counts[u:]) / total


def mann_whitney_u(a: Sequence[float], b: Sequence[float], method: str = "auto") -> TwoSampleResult:
    """Two-sided Mann-Whitney U test.

    ``auto`` uses the exact null distribution when either sample has at most
    eight values and there are no ties, otherwise the normal approximation
    with tie and continuity corrections. The reported statistic is U for ``a``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise AnalysisError("Mann-Whitney U needs non-empty groups")
    combined = np.concatenate([a, b])
    ranks = rankdata(combined)
    r1 = ranks[:n1].sum()
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    u = max(u1, u2)
    counts = tie_counts(combined)
    has_ties = bool((counts > 1).any())

    if method == "auto":
        method = "asymptotic" if (n1 > 8 and n2 > 8) or has_ties else "exact"
    if method == "exact":
        if has_ties:
            raise AnalysisError("exact Mann-Whitney distribution assumes no ties")
        p = 2.0 * _exact_u_sf(int(round(u)), n1, n2)
        return TwoSampleResult(float(u1), _clip_p(p), "mann_whitney_exact")
    if method != "asymptotic":
        raise ValueError(f"unknown method {method!r}")

    n = n1 + n2
    tie_term = float((counts.astype(float) ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return TwoSampleResult(float(u1), 1.0, "mann_whitney_asymptotic", degenerate=True)
    z = (u - n1 * n2 / 2.0 - 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(z / math.sqrt(2.0))
    return TwoSampleResult(float(u1), _clip_p(p), "mann_whitney_asymptotic")


def looks_normal(values: Sequence[float], alpha: float = 0.05) -> bool:
    """Shapiro-Wilk screen; groups under three values or without spread fail it."""
    x = np.asarray(values, dtype=float)
    if len(x) < 3 or np.ptp(x) == 0:
        return False
    return bool(_sps.shapiro(x).pvalue >= alpha)


def compare_groups(a: Sequence[float], b: Sequence[float], normality_alpha: float = 0.05) -> TwoSampleResult:
    """Welch when both groups pass the normality screen, Mann-Whitney otherwise."""
    if len(a) < 2 or len(b) < 2:
        raise AnalysisError("pairwise comparison needs at least two samples per group")
    if looks_normal(a, normality_alpha) and looks_normal(b, normality_alpha):
        return welch_t_test(a, b)
    return mann_whitney_u(a, b)


def holm_adjust(p_values: Sequence[float]) -> list[float]:
    """Holm-Bonferroni step-down adjusted p-values, in input order."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[i]))
        adjusted[i] = running
    return adjusted


@dataclass(frozen=True)
class Descriptive:
    n: int
    mean: float
    median: float
    sd: float
    sd_defined: bool
    min: float
    max: float
    q1: float
    q3: float


def descriptive(values: Sequence[float]) -> Descriptive:
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        raise AnalysisError("no samples")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    sd_defined = len(x) > 1
    return Descriptive(
        n=len(x),
        mean=float(x.mean()),
        median=float(med),
        sd=float(x.std(ddof=1)) if sd_defined else 0.0,
        sd_defined=sd_defined,
        min=float(x.min()),
        max=float(x.max()),
        q1=float(q1),
        q3=float(q3),
    )


@dataclass(frozen=True)
class BoxSummary:
    q1: float
    median: float
    q3: float
    lo_whisker: float
    hi_whisker: float
    outliers: tuple[float, ...]


def box_summary(values: Sequence[float], k: float = 1.5) -> BoxSummary:
    """Tukey box: whiskers at the most extreme points within k*IQR of the box."""
    x = np.sort(np.asarray(values, dtype=float))
    if len(x) == 0:
        raise AnalysisError("no samples")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - k * iqr, q3 + k * iqr
    inside = x[(x >= lo) & (x <= hi)]
    return BoxSummary(
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        lo_whisker=float(inside.min()),
        hi_whisker=float(inside.max()),
        outliers=tuple(float(v) for v in x[(x < lo) | (x > hi)]),
    )


def iqr_filter(values: Sequence[float], k: float = 1.5) -> list[float]:
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        return []
    q1, q3 = np.percentile(x, [25, 75])
    iqr = q3 - q1
    keep = (x >= q1 - k * iqr) & (x <= q3 + k * iqr)
    return [float(v) for v in x[keep]]
