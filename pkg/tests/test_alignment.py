import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twins.exceptions import ErrorCode, TwinException
from twins.fidelity.alignment import AlignmentConfig, align, align_similarity

DEFAULT = AlignmentConfig(tolerance_ms=1_000)


def brute_force(a, b, cfg=DEFAULT, categorical=True):
    """Best (score, matches) over every global alignment, by exhaustive recursion."""
    a, b = tuple(a), tuple(b)

    def matches(x, y):
        return x == y if categorical else abs(x - y) <= cfg.tolerance_ms

    @lru_cache(maxsize=None)
    def best(i, j):
        if i == len(a):
            return ((len(b) - j) * cfg.gap_penalty, 0)
        if j == len(b):
            return ((len(a) - i) * cfg.gap_penalty, 0)
        hit = matches(a[i], b[j])
        s, m = best(i + 1, j + 1)
        options = [(s + (cfg.match_score if hit else cfg.mismatch_penalty), m + hit)]
        s, m = best(i + 1, j)
        options.append((s + cfg.gap_penalty, m))
        s, m = best(i, j + 1)
        options.append((s + cfg.gap_penalty, m))
        return max(options)

    score, matched = best(0, 0)
    return score, 100.0 * 2 * matched / (len(a) + len(b))


def test_identical_categorical():
    assert align_similarity([200, 503, 200, 200, 503], [200, 503, 200, 200, 503], DEFAULT, categorical=True) == 100.0


def test_numeric_within_tolerance():
    assert align_similarity([2_000, 2_500, 3_000], [2_400, 2_900, 3_400], DEFAULT) == 100.0


def test_one_status_mismatch():
    assert align_similarity([200, 200, 503, 200], [200, 200, 200, 200], DEFAULT, categorical=True) == 75.0


def test_unequal_lengths():
    result = align([1, 2, 3], [1, 3], AlignmentConfig(tolerance_ms=0))
    assert result.matches == 2
    assert result.similarity_pct == pytest.approx(80.0)


def test_empty_trace():
    with pytest.raises(TwinException) as e:
        align_similarity([], [200], DEFAULT)
    assert e.value.error_code == ErrorCode.EMPTY_TRACE


def test_mixed_channel_types():
    with pytest.raises(TwinException) as e:
        align_similarity([200, 503], ["ok", "busy"], DEFAULT)
    assert e.value.error_code == ErrorCode.INVALID_PARAMETERS


def test_scores_must_favour_matches():
    with pytest.raises(ValueError):
        AlignmentConfig(match_score=-1, mismatch_penalty=-1)


def test_exhaustive_short_traces():
    alphabet = (200, 503, 0)
    for n, m in [(1, 1), (2, 3), (3, 3), (4, 2)]:
        for a in itertools.product(alphabet, repeat=n):
            for b in itertools.product(alphabet, repeat=m):
                result = align(a, b, DEFAULT, categorical=True)
                score, pct = brute_force(a, b)
                assert (result.score, result.similarity_pct) == (score, pct), (a, b)


@settings(max_examples=300, deadline=None)
@given(a=st.lists(st.sampled_from([200, 503, 404]), min_size=1, max_size=8),
       b=st.lists(st.sampled_from([200, 503, 404]), min_size=1, max_size=8))
def test_matches_oracle_categorical(a, b):
    assert align_similarity(a, b, DEFAULT, categorical=True) == brute_force(a, b)[1]


@settings(max_examples=300, deadline=None)
@given(a=st.lists(st.floats(0, 6_000, allow_nan=False), min_size=1, max_size=10),
       b=st.lists(st.floats(0, 6_000, allow_nan=False), min_size=1, max_size=10))
def test_matches_oracle_numeric(a, b):
    assert align_similarity(a, b, DEFAULT) == pytest.approx(brute_force(a, b, categorical=False)[1])


@settings(max_examples=200, deadline=None)
@given(a=st.lists(st.integers(0, 5_000), min_size=1, max_size=15),
       b=st.lists(st.integers(0, 5_000), min_size=1, max_size=15))
def test_symmetry_and_bounds(a, b):
    forward = align_similarity(a, b, DEFAULT)
    assert forward == align_similarity(b, a, DEFAULT)
    assert 0.0 <= forward <= 100.0


def test_random_numeric_pairs_against_oracle():
    rng = np.random.default_rng(12)
    for _ in range(1_000):
        a = rng.uniform(0, 5_000, rng.integers(1, 9)).tolist()
        b = rng.uniform(0, 5_000, rng.integers(1, 9)).tolist()
        assert align_similarity(a, b, DEFAULT) == pytest.approx(brute_force(a, b, categorical=False)[1])


@pytest.mark.parametrize("length", [1, 5, 12, 20])
def test_monotone_degradation(length):
    rng = np.random.default_rng(length)
    a = rng.uniform(2_000, 3_000, length).tolist()
    previous = 100.0
    for k in range(length + 1):
        b = list(a)
        for i in range(k):
            b[i] = 1e9
        pct = align_similarity(a, b, DEFAULT)
        assert pct == pytest.approx(100.0 * (length - k) / length)
        assert pct == pytest.approx(brute_force(a, b, categorical=False)[1])
        assert pct <= previous
        previous = pct


def test_long_traces_are_fast():
    rng = np.random.default_rng(0)
    a = rng.uniform(2_000, 3_000, 3_000)
    b = rng.uniform(2_000, 3_000, 3_000)
    assert align_similarity(a.tolist(), b.tolist(), DEFAULT) == 100.0
