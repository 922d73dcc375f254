"""Sample-level and per-label evaluation of annotated datasets.

Precision, recall, and F1 are computed per sample (set overlap between
gold and predicted labels) and averaged, plus per-label confusion
counts with macro average and population standard deviation. Hit tables
bucket samples by gold cardinality, scoring each sample's top-k_i
predictions against its k_i gold labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Dataset
from .errors import DataError
from .labelspace import top_k

GoldSets = Sequence[frozenset[int] | set[int]]


@dataclass(frozen=True)
class SampleMetrics:
    """Averages of the per-sample precision/recall/F1 ratios."""

    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LabelMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    sample: SampleMetrics
    per_label: list[LabelMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    std_precision: float
    std_recall: float
    std_f1: float
    policy: str = "oracle-k"  # "oracle-k" | "threshold"
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "threshold": self.threshold,
            "sample_precision": self.sample.precision,
            "sample_recall": self.sample.recall,
            "sample_f1": self.sample.f1,
            "per_label": [
                {"precision": r.precision, "recall": r.recall, "f1": r.f1} for r in self.per_label
            ],
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "std_precision": self.std_precision,
            "std_recall": self.std_recall,
            "std_f1": self.std_f1,
        }


@dataclass
class HitBucket:
    cardinality: int
    corpus_count: int = 0
    label_count: int = 0
    hits: int = 0

    @property
    def hit_rate(self) -> float:
        return self.hits / self.label_count if self.label_count else 0.0


@dataclass
class HitTable:
    buckets: list[HitBucket]
    top_n: list[HitBucket]  # cumulative Top1/Top2/Top3 rows over single-label samples

    @property
    def total(self) -> HitBucket:
        t = HitBucket(cardinality=0)
        for b in self.buckets:
            t.corpus_count += b.corpus_count
            t.label_count += b.label_count
            t.hits += b.hits
        return t

    def bucket(self, cardinality: int) -> HitBucket | None:
        for b in self.buckets:
            if b.cardinality == cardinality:
                return b
        return None


@dataclass
class PearsonMatrix:
    values: np.ndarray  # (C, C)
    labels: tuple[str, ...]
    constant: tuple[bool, ...] = field(default=())  # flags for zero-variance columns


def _f1(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def sample_metrics(gold_sets: GoldSets, predicted_sets: GoldSets) -> SampleMetrics:
    """Average per-sample set-overlap precision, recall, and F1.

    Edge rules: both sets empty counts as a perfect sample; an empty
    prediction against non-empty gold (and vice versa) scores 0.
    """
    if len(gold_sets) != len(predicted_sets):
        raise DataError(f"{len(gold_sets)} gold sets vs {len(predicted_sets)} predicted sets")
    if not gold_sets:
        raise DataError("need at least one sample")
    p_total = r_total = f_total = 0.0
    for gold, pred in zip(gold_sets, predicted_sets):
        gold, pred = set(gold), set(pred)
        if not gold and not pred:
            p = r = 1.0
        else:
            overlap = len(gold & pred)
            p = overlap / len(pred) if pred else 0.0
            r = overlap / len(gold) if gold else 0.0
        p_total += p
        r_total += r
        f_total += _f1(p, r)
    m = len(gold_sets)
    return SampleMetrics(p_total / m, r_total / m, f_total / m)


def oracle_k_predictions(annotated: Dataset) -> list[frozenset[int]]:
    """Predict exactly |gold| labels per sample via top-k intensities."""
    preds = []
    for s in annotated.samples:
        if not s.gold:
            raise DataError(f"sample {s.id}: empty gold set, k is undefined in oracle-k mode")
        if s.intensities is None:
            raise DataError(f"sample {s.id}: no intensities to rank")
        preds.append(top_k(s.intensities, len(s.gold)))
    return preds


def threshold_predictions(annotated: Dataset, threshold: float) -> list[frozenset[int]]:
    """Predict every label whose intensity is at least the threshold."""
    preds = []
    for s in annotated.samples:
        if s.intensities is None:
            raise DataError(f"sample {s.id}: no intensities to threshold")
        preds.append(frozenset(j for j, v in enumerate(s.intensities) if v >= threshold))
    return preds


def hit_table(annotated: Dataset, max_top_n: int = 3) -> HitTable:
    """Per-cardinality hit accounting plus cumulative Top-n rows.

    A hit is a gold label recovered among a sample's top-k_i intensities
    (k_i = gold cardinality). Top-n rows cover single-label samples only:
    the cumulative count whose gold label ranks within the top n.
    """
    by_card: dict[int, HitBucket] = {}
    single_total = 0
    rank_hits = [0] * max_top_n
    for s in annotated.samples:
        if not s.gold:
            raise DataError(f"sample {s.id}: empty gold set, cannot bucket by cardinality")
        if s.intensities is None:
            raise DataError(f"sample {s.id}: no intensities to rank")
        k = len(s.gold)
        bucket = by_card.setdefault(k, HitBucket(cardinality=k))
        bucket.corpus_count += 1
        bucket.label_count += k
        bucket.hits += len(s.gold & top_k(s.intensities, k))
        if k == 1:
            single_total += 1
            (gold_label,) = s.gold
            n_max = min(max_top_n, annotated.num_labels)
            for n in range(1, n_max + 1):
                if gold_label in top_k(s.intensities, n):
                    for depth in range(n, max_top_n + 1):
                        rank_hits[depth - 1] += 1
                    break
    top_rows = [
        HitBucket(cardinality=1, corpus_count=single_total, label_count=single_total, hits=rank_hits[n])
        for n in range(max_top_n)
    ]
    buckets = [by_card[k] for k in sorted(by_card)]
    return HitTable(buckets=buckets, top_n=top_rows)


def per_label_metrics(
    gold_sets: GoldSets, predicted_sets: GoldSets, num_labels: int
) -> tuple[list[LabelMetrics], LabelMetrics, LabelMetrics]:
    """Per-label P/R/F1 rows plus (macro means, population stds).

    Labels with zero denominators score 0, matching how absent rare
    labels are reported rather than dropped.
    """
    if len(gold_sets) != len(predicted_sets):
        raise DataError(f"{len(gold_sets)} gold sets vs {len(predicted_sets)} predicted sets")
    tp = [0] * num_labels
    fp = [0] * num_labels
    fn = [0] * num_labels
    for gold, pred in zip(gold_sets, predicted_sets):
        for j in pred:
            if j in gold:
                tp[j] += 1
            else:
                fp[j] += 1
        for j in gold:
            if j not in pred:
                fn[j] += 1
    rows = []
    for j in range(num_labels):
        p = tp[j] / (tp[j] + fp[j]) if tp[j] + fp[j] else 0.0
        r = tp[j] / (tp[j] + fn[j]) if tp[j] + fn[j] else 0.0
        rows.append(LabelMetrics(p, r, _f1(p, r)))
    cols = [[r.precision for r in rows], [r.recall for r in rows], [r.f1 for r in rows]]
    means = [sum(c) / num_labels for c in cols]
    stds = [math.sqrt(sum((v - mu) ** 2 for v in c) / num_labels) for c, mu in zip(cols, means)]
    return rows, LabelMetrics(*means), LabelMetrics(*stds)


def build_report(
    gold_sets: GoldSets,
    predicted_sets: GoldSets,
    num_labels: int,
    policy: str,
    threshold: float | None = None,
) -> MetricsReport:
    """Assemble the full metrics report for one prediction policy."""
    sample = sample_metrics(gold_sets, predicted_sets)
    rows, macro, std = per_label_metrics(gold_sets, predicted_sets, num_labels)
    return MetricsReport(
        sample=sample,
        per_label=rows,
        macro_precision=macro.precision,
        macro_recall=macro.recall,
        macro_f1=macro.f1,
        std_precision=std.precision,
        std_recall=std.recall,
        std_f1=std.f1,
        policy=policy,
        threshold=threshold,
    )


def pearson_matrix(annotated: Dataset) -> PearsonMatrix:
    """Pearson correlation between every pair of label intensity columns.

    Constant columns are flagged and correlate 0 with everything,
    including themselves, instead of producing NaN.
    """
    if len(annotated.samples) < 2:
        raise DataError("Pearson correlation needs at least 2 samples")
    if any(s.intensities is None for s in annotated.samples):
        raise DataError("all samples need intensities for correlation analysis")
    cols = np.array([s.intensities for s in annotated.samples], dtype=np.float64)
    centered = cols - cols.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    constant = norms == 0.0
    safe = np.where(constant, 1.0, norms)
    unit = centered / safe
    matrix = unit.T @ unit
    matrix[constant, :] = 0.0
    matrix[:, constant] = 0.0
    diag = np.where(constant, 0.0, 1.0)
    np.fill_diagonal(matrix, diag)
    matrix = (matrix + matrix.T) / 2.0
    matrix = np.clip(matrix, -1.0, 1.0)
    return PearsonMatrix(values=matrix, labels=annotated.vocab.names, constant=tuple(bool(b) for b in constant))
