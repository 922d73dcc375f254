"""Independent brute-force reference implementations.

Everything here is written in plain Python against the definitions
directly (set overlap ratios, confusion counts, explicit covariance),
deliberately sharing no code with the package so the two sides can
check each other.
"""

from __future__ import annotations

import math


def brute_top_k(values, k):
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    return set(order[:k])


def brute_sample_prf(gold, pred):
    gold, pred = set(gold), set(pred)
    if not gold and not pred:
        return 1.0, 1.0, 1.0
    inter = len(gold & pred)
    p = inter / len(pred) if pred else 0.0
    r = inter / len(gold) if gold else 0.0
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def brute_sample_metrics(gold_sets, predicted_sets):
    triples = [brute_sample_prf(g, p) for g, p in zip(gold_sets, predicted_sets)]
    m = len(triples)
    return (
        sum(t[0] for t in triples) / m,
        sum(t[1] for t in triples) / m,
        sum(t[2] for t in triples) / m,
    )


def brute_per_label(gold_sets, predicted_sets, num_labels):
    """Rows of (p, r, f1) per label, then (macro triple, population-std triple)."""
    rows = []
    for j in range(num_labels):
        tp = sum(1 for g, p in zip(gold_sets, predicted_sets) if j in g and j in p)
        fp = sum(1 for g, p in zip(gold_sets, predicted_sets) if j not in g and j in p)
        fn = sum(1 for g, p in zip(gold_sets, predicted_sets) if j in g and j not in p)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        rows.append((p, r, f))
    macro = tuple(sum(row[i] for row in rows) / num_labels for i in range(3))
    std = tuple(
        math.sqrt(sum((row[i] - macro[i]) ** 2 for row in rows) / num_labels) for i in range(3)
    )
    return rows, macro, std


def brute_hit_table(samples):
    """``samples`` is a list of (gold set, intensity list).

    Returns ({cardinality: (corpus, labels, hits)}, [top1, top2, top3 hits],
    single-label count).
    """
    buckets: dict[int, tuple[int, int, int]] = {}
    top_hits = [0, 0, 0]
    singles = 0
    for gold, intensities in samples:
        k = len(gold)
        corpus, labels, hits = buckets.get(k, (0, 0, 0))
        buckets[k] = (corpus + 1, labels + k, hits + len(set(gold) & brute_top_k(intensities, k)))
        if k == 1:
            singles += 1
            (g,) = gold
            for n in (1, 2, 3):
                if g in brute_top_k(intensities, min(n, len(intensities))):
                    top_hits[n - 1] += 1
    return buckets, top_hits, singles


def brute_pearson(columns):
    """Full correlation matrix from the covariance formula, column by column.

    ``columns`` is an m x c list of rows. Constant columns correlate 0
    with everything, themselves included.
    """
    m = len(columns)
    c = len(columns[0])
    means = [sum(row[j] for row in columns) / m for j in range(c)]
    matrix = [[0.0] * c for _ in range(c)]
    for a in range(c):
        for b in range(c):
            cov = sum((row[a] - means[a]) * (row[b] - means[b]) for row in columns) / m
            var_a = sum((row[a] - means[a]) ** 2 for row in columns) / m
            var_b = sum((row[b] - means[b]) ** 2 for row in columns) / m
            if var_a == 0.0 or var_b == 0.0:
                matrix[a][b] = 0.0
            else:
                matrix[a][b] = cov / math.sqrt(var_a * var_b)
    return matrix
