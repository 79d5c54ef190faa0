"""Membership inference over token streams via normalized Hamming distance."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    n_r: int
    thresholds: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if self.n_r < 1:
            raise PrivacyError("n_r must be >= 1")
        ts = self.thresholds
        if any(not 0.0 <= t <= 1.0 for t in ts):
            raise PrivacyError("thresholds must lie in [0, 1]")
        if any(ts[i] > ts[i + 1] for i in range(len(ts) - 1)):
            raise PrivacyError("thresholds must be sorted ascending")


def hamming(a: Sequence[int] | np.ndarray, b: Sequence[int] | np.ndarray) -> tuple[int, float]:
    """(raw differing positions, raw / length) for equal-length id sequences."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise PrivacyError(f"length mismatch: {a.shape} vs {b.shape}")
    raw = int(np.count_nonzero(a != b))
    return raw, raw / a.shape[0]


@dataclass
class ThresholdResult:
    threshold: float
    precision: Optional[float]
    recall: Optional[float]
    flagged: list[int] = field(default_factory=list)  # pool indices; train first


@dataclass
class PrivacyReport:
    n_r: int
    seed: int
    train_indices: list[int]
    heldout_indices: list[int]
    results: list[ThresholdResult]

    def rows(self) -> list[tuple[float, Optional[float], Optional[float]]]:
        return [(r.threshold, r.precision, r.recall) for r in self.results]


def _as_matrix(streams: Sequence[np.ndarray]) -> np.ndarray:
    mat = np.asarray([np.asarray(s).ravel() for s in streams])
    if mat.ndim != 2:
        raise PrivacyError("streams must share a fixed padded length")
    return mat


def membership_attack(train: Sequence[np.ndarray], heldout: Sequence[np.ndarray],
                      synthetic: Sequence[np.ndarray],
                      config: AttackConfig) -> PrivacyReport:
    """Flag pool records whose nearest synthetic record is within threshold.

    The pool is n_r seeded samples from train plus n_r from held-out; a
    record counts as an inferred member iff its minimum normalized Hamming
    distance over all synthetic records is <= the threshold.
    """
    train_m, heldout_m, synth_m = map(_as_matrix, (train, heldout, synthetic))
    if train_m.shape[1] != heldout_m.shape[1] or train_m.shape[1] != synth_m.shape[1]:
        raise PrivacyError("train/held-out/synthetic streams must share a length")
    if len(train_m) < config.n_r or len(heldout_m) < config.n_r:
        raise PrivacyError(f"need at least n_r={config.n_r} records in train and held-out")

    rng = random.Random(config.seed)
    train_idx = sorted(rng.sample(range(len(train_m)), config.n_r))
    heldout_idx = sorted(rng.sample(range(len(heldout_m)), config.n_r))
    pool = np.concatenate([train_m[train_idx], heldout_m[heldout_idx]])
    is_member = np.arange(len(pool)) < config.n_r

    length = pool.shape[1]
    min_dist = np.empty(len(pool))
    for i, record in enumerate(pool):
        diffs = np.count_nonzero(synth_m != record, axis=1)
        min_dist[i] = diffs.min() / length

    results = []
    for threshold in config.thresholds:
        flagged = min_dist <= threshold
        n_flagged = int(flagged.sum())
        tp = int(np.count_nonzero(flagged & is_member))
        results.append(
            ThresholdResult(
                threshold=threshold,
                precision=tp / n_flagged if n_flagged else None,
                recall=tp / config.n_r,
                flagged=np.flatnonzero(flagged).tolist(),
            )
        )
    return PrivacyReport(config.n_r, config.seed, train_idx, heldout_idx, results)
