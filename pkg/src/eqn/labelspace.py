"""Numeric operations on full-label intensity vectors.

Intensity vectors are length-C float arrays on the 0..10 scale. Gold
labels map to the maximum intensity 10.0; absent labels start at 0.0.
Tie-breaking is by ascending label index everywhere, so every selection
is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import INTENSITY_MAX, INTENSITY_MIN
from .errors import UsageError


@dataclass(frozen=True)
class AnnotationConfig:
    """Threshold used when turning raw scores into annotations (Eq.-8 style cut)."""

    threshold: float = 1.0
    max_intensity: float = INTENSITY_MAX
    min_intensity: float = INTENSITY_MIN

    def __post_init__(self) -> None:
        if not self.min_intensity <= self.threshold <= self.max_intensity:
            raise UsageError(
                f"threshold {self.threshold} outside [{self.min_intensity}, {self.max_intensity}]"
            )


def init_full_labels(gold: Iterable[int], num_labels: int) -> np.ndarray:
    """Map a gold label set to the 0/10 initialization vector."""
    out = np.zeros(num_labels, dtype=np.float64)
    for j in gold:
        if not 0 <= j < num_labels:
            raise UsageError(f"label index {j} out of range (C={num_labels})")
        out[j] = INTENSITY_MAX
    return out


def regress_labels(gold: Iterable[int], model_annotation: Sequence[float] | np.ndarray) -> np.ndarray:
    """Restore gold positions to 10.0, keeping learned values elsewhere."""
    out = np.asarray(model_annotation, dtype=np.float64).copy()
    for j in gold:
        if not 0 <= j < out.shape[0]:
            raise UsageError(f"label index {j} out of range (C={out.shape[0]})")
        out[j] = INTENSITY_MAX
    return out


def clamp(raw: Sequence[float] | np.ndarray) -> np.ndarray:
    """Clip raw regressor outputs back onto the 0..10 scale."""
    return np.clip(np.asarray(raw, dtype=np.float64), INTENSITY_MIN, INTENSITY_MAX)


def annotate_threshold(raw: Sequence[float] | np.ndarray, cfg: AnnotationConfig) -> np.ndarray:
    """Clamp to [0, 10], then zero every value below the threshold."""
    out = clamp(raw)
    out[out < cfg.threshold] = 0.0
    return out


def top_k(raw: Sequence[float] | np.ndarray, k: int) -> frozenset[int]:
    """Indices of the k largest values; ties broken by ascending index."""
    values = np.asarray(raw, dtype=np.float64)
    if not 1 <= k <= values.shape[0]:
        raise UsageError(f"k={k} out of range for {values.shape[0]} labels")
    # Stable sort on negated values keeps lower indices first among ties.
    order = np.argsort(-values, kind="stable")
    return frozenset(int(j) for j in order[:k])


def arg_max(raw: Sequence[float] | np.ndarray) -> int:
    """Index of the highest intensity (lowest index wins ties)."""
    values = np.asarray(raw, dtype=np.float64)
    if values.shape[0] < 1:
        raise UsageError("empty intensity vector")
    return int(np.argmax(values))
