"""
Needleman-Wunsch similarity between two trace channels.

Among all global alignments the one with the best score wins, ties broken
by the number of matched positions; similarity counts matched positions,
100 * 2 * matched / (len(a) + len(b)). Numeric elements match when they
differ by at most the tolerance, categorical elements when equal.
"""
import logging
from numbers import Number
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from twins.common.config import SETTINGS
from twins.exceptions import ErrorCode, TwinException

logger = logging.getLogger(__name__)


class AlignmentConfig(BaseModel):
    tolerance_ms: float = Field(default_factory=lambda: SETTINGS.TOLERANCE_MS, ge=0)
    match_score: int = 1
    mismatch_penalty: int = -1
    gap_penalty: int = -1

    @model_validator(mode="after")
    def _scores(self):
        if self.match_score <= self.mismatch_penalty:
            raise ValueError("match score must exceed the mismatch penalty")
        return self


class AlignmentResult(BaseModel):
    score: int
    matches: int
    len_a: int
    len_b: int

    @property
    def similarity_pct(self) -> float:
        return 100.0 * 2 * self.matches / (self.len_a + self.len_b)


def _is_categorical(values: Sequence) -> bool:
    return any(not isinstance(v, Number) or isinstance(v, bool) for v in values)


def align(a: Sequence, b: Sequence, cfg: Optional[AlignmentConfig] = None,
          categorical: Optional[bool] = None) -> AlignmentResult:
    """
    Global alignment by dynamic programming, one numpy row at a time.

    Score and match count travel together as ``score * W + matches`` with
    ``W > len(a) + len(b)``, so maximizing the packed value maximizes the
    score first and the matches second. With a linear gap penalty the
    left-to-right gap recurrence is a running maximum.
    """
    cfg = cfg or AlignmentConfig()
    if len(a) == 0 or len(b) == 0:
        raise TwinException(ErrorCode.EMPTY_TRACE, f"Cannot align traces of lengths {len(a)} and {len(b)}")
    cat_a, cat_b = _is_categorical(a), _is_categorical(b)
    if categorical is None:
        if cat_a != cat_b:
            raise TwinException(ErrorCode.INVALID_PARAMETERS, "Channels must both be numeric or both categorical")
        categorical = cat_a
    elif not categorical and (cat_a or cat_b):
        raise TwinException(ErrorCode.INVALID_PARAMETERS, "Numeric alignment needs numeric channels")

    n, m = len(a), len(b)
    w = n + m + 1
    gap = cfg.gap_penalty * w
    hit = cfg.match_score * w + 1
    miss = cfg.mismatch_penalty * w
    if categorical:
        bs = np.asarray(list(b), dtype=object)
    else:
        bs = np.asarray(b, dtype=float)

    idx = np.arange(m + 1, dtype=np.int64)
    prev = idx * gap
    for i in range(1, n + 1):
        x = a[i - 1]
        matched = (bs == x) if categorical else (np.abs(bs - float(x)) <= cfg.tolerance_ms)
        diag = prev[:-1] + np.where(matched, hit, miss)
        best = np.empty(m + 1, dtype=np.int64)
        best[0] = i * gap
        best[1:] = np.maximum(diag, prev[1:] + gap)
        prev = np.maximum.accumulate(best - idx * gap) + idx * gap

    packed = int(prev[m])
    score, matches = divmod(packed, w)
    return AlignmentResult(score=score, matches=matches, len_a=n, len_b=m)


def align_similarity(a: Sequence, b: Sequence, cfg: Optional[AlignmentConfig] = None,
                     categorical: Optional[bool] = None) -> float:
    """Similarity percentage of two trace channels; symmetric in ``a`` and ``b``."""
    return align(a, b, cfg, categorical).similarity_pct
