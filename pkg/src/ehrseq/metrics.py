"""Evaluation primitives: token-level accuracy and AUROC."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .serializer import TokenStream
from .vocab import PAD_ID


class MetricError(ValueError):
    pass


def token_accuracy(reference: TokenStream, hypothesis: TokenStream,
                   include_pads: bool = False) -> Optional[float]:
    """Fraction of matching token positions; reference pads excluded by default.

    Returns None when no positions are considered.
    """
    if reference.tokens.shape != hypothesis.tokens.shape:
        raise MetricError(
            f"shape mismatch: {reference.tokens.shape} vs {hypothesis.tokens.shape}"
        )
    mask = np.ones(reference.tokens.shape, dtype=bool) if include_pads \
        else reference.tokens != PAD_ID
    considered = int(mask.sum())
    if considered == 0:
        return None
    matches = int(np.count_nonzero((reference.tokens == hypothesis.tokens) & mask))
    return matches / considered


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Pairwise ranking statistic via midrank rank-sum; ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError("scores and labels must be matched 1-d sequences")
    if not np.isfinite(scores).all():
        raise MetricError("scores must be finite")
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs at least one example of each class")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1

    u = float(ranks[labels == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
