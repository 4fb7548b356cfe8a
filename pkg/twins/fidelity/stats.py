"""Exact two-sided tests on paired traces: Wilcoxon signed-rank and Fisher's exact test."""
import logging
from fractions import Fraction
from math import comb
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel
from scipy.stats import norm, rankdata

from twins.exceptions import ErrorCode, TwinException

logger = logging.getLogger(__name__)

EXACT_MAX_N = 20
MIN_PAIRS = 5


class SignedRankResult(BaseModel):
    statistic: float  # sum of ranks of positive differences
    p_value: float
    n: int  # pairs left after dropping zero differences
    method: Literal["exact", "normal", "no-differences"]


def _exact_tail(doubled_ranks: np.ndarray, t2: int) -> float:
    """Two-sided p from the exact null distribution of the doubled rank sum."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    outcomes = 2 ** len(doubled_ranks)
    lower = Fraction(int(counts[:t2 + 1].sum()), outcomes)
    upper = Fraction(int(counts[t2:].sum()), outcomes)
    return float(min(Fraction(1), 2 * min(lower, upper)))


def signed_rank_test(a: Sequence[float], b: Sequence[float]) -> SignedRankResult:
    """
    Wilcoxon signed-rank test of paired samples. Zero differences are
    dropped and ties share average ranks; up to 20 pairs the null
    distribution is enumerated exactly, beyond that a normal approximation
    with continuity and tie correction is used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise TwinException(ErrorCode.INVALID_PARAMETERS, f"Paired samples differ in shape: {a.shape} vs {b.shape}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return SignedRankResult(statistic=0.0, p_value=1.0, n=0, method="no-differences")
    if n < MIN_PAIRS:
        raise TwinException(ErrorCode.TOO_FEW_PAIRS, f"{n} non-zero difference(s), at least {MIN_PAIRS} required")

    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_tail(doubled, int(round(2 * t_plus)))
        return SignedRankResult(statistic=t_plus, p_value=p, n=n, method="exact")

    mean = n * (n + 1) / 4
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float((tie_sizes ** 3 - tie_sizes).sum()) / 48
    if var <= 0:
        return SignedRankResult(statistic=t_plus, p_value=1.0, n=n, method="normal")
    z = max(0.0, abs(t_plus - mean) - 0.5) / np.sqrt(var)
    p = float(min(1.0, 2 * norm.sf(z)))
    return SignedRankResult(statistic=t_plus, p_value=p, n=n, method="normal")


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of the signed-rank test."""
    return signed_rank_test(a, b).p_value


class FisherResult(BaseModel):
    p_value: float
    degenerate: bool = False  # a zero margin; p is 1.0 by convention


def _as_table(table) -> tuple:
    arr = np.asarray(table)
    if arr.shape != (2, 2):
        raise TwinException(ErrorCode.INVALID_PARAMETERS, f"Expected a 2x2 table, got shape {arr.shape}")
    values = []
    for v in arr.ravel().tolist():
        if isinstance(v, bool) or not float(v).is_integer() or v < 0:
            raise TwinException(ErrorCode.INVALID_PARAMETERS, f"Counts must be non-negative integers, got {v!r}")
        values.append(int(v))
    return tuple(values)


def fisher_test(table) -> FisherResult:
    """
    Fisher's exact test on a 2x2 table. Every table with the observed
    margins is enumerated with exact integer hypergeometric weights; the
    two-sided p sums the tables no more likely than the observed one.
    """
    a, b, c, d = _as_table(table)
    row1, row2, col1 = a + b, c + d, a + c
    n = row1 + row2
    if 0 in (row1, row2, col1, n - col1):
        return FisherResult(p_value=1.0, degenerate=True)

    def weight(x: int) -> int:
        return comb(row1, x) * comb(row2, col1 - x)

    observed = weight(a)
    tail = sum(w for w in map(weight, range(max(0, col1 - row2), min(row1, col1) + 1)) if w <= observed)
    return FisherResult(p_value=float(min(Fraction(1), Fraction(tail, comb(n, col1)))))


def fisher_exact(table) -> float:
    """Two-sided p-value of Fisher's exact test."""
    return fisher_test(table).p_value
