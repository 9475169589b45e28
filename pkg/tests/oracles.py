"""Naive reference implementations for cross-checking the fast kernels.

Everything here is deliberately written the slow, obvious way: plain loops,
``math.fsum`` for reductions, ``Fraction`` for the exact percentile cutoff,
and O(n^2) counting for ranks. None of it imports the package under test.
"""

from __future__ import annotations

import math
from fractions import Fraction


def naive_mad(p, q) -> float:
    if len(p) != len(q):
        raise ValueError("length mismatch")
    return math.fsum(abs(a - b) for a, b in zip(p, q)) / len(p)


def naive_msd(p, q) -> float:
    if len(p) != len(q):
        raise ValueError("length mismatch")
    return math.fsum((a - b) ** 2 for a, b in zip(p, q)) / len(p)


def naive_pearson(p, q) -> float | None:
    if len(p) != len(q):
        raise ValueError("length mismatch")
    n = len(p)
    if n < 2:
        raise ValueError("need at least 2 values")
    mp = math.fsum(p) / n
    mq = math.fsum(q) / n
    cov = math.fsum((a - mp) * (b - mq) for a, b in zip(p, q)) / n
    var_p = math.fsum((a - mp) ** 2 for a in p) / n
    var_q = math.fsum((b - mq) ** 2 for b in q) / n
    if var_p == 0.0 or var_q == 0.0:
        return None
    r = cov / (math.sqrt(var_p) * math.sqrt(var_q))
    return max(-1.0, min(1.0, r))


def naive_rank(values) -> list[float]:
    # rank by counting: smaller elements push the rank up, ties share the
    # mean of the positions they occupy
    ranks = []
    for v in values:
        less = sum(1 for other in values if other < v)
        equal = sum(1 for other in values if other == v)
        ranks.append(less + (equal + 1) / 2.0)
    return ranks


def naive_spearman(p, q) -> float | None:
    return naive_pearson(naive_rank(list(p)), naive_rank(list(q)))


def naive_top_set(values, percent) -> set[int]:
    n = len(values)
    k = math.ceil(Fraction(n) * Fraction(percent) / 100)
    cutoff = sorted(values, reverse=True)[k - 1]
    return {j for j, v in enumerate(values) if v >= cutoff}


def naive_overlap(p, q, percent) -> float:
    top_p = naive_top_set(list(p), percent)
    top_q = naive_top_set(list(q), percent)
    return len(top_p & top_q) / len(top_p | top_q)


def naive_class_kld(p, q, epsilon) -> float:
    if len(p) != len(q):
        raise ValueError("length mismatch")
    terms = []
    for a, b in zip(p, q):
        if b == 0.0:
            continue
        if epsilon == 0.0 and a == 0.0:
            raise ValueError("infinite divergence")
        denominator = a if a > 1e-12 else 1e-12
        terms.append(b * math.log(epsilon + b / denominator))
    return math.fsum(terms)


def naive_macro(pairs, class_count) -> dict[str, float]:
    """Accuracy and macro scores from (truth, predicted) index pairs."""
    correct = sum(1 for t, p in pairs if t == p)
    accuracy = correct / len(pairs)
    precisions = []
    recalls = []
    f1s = []
    for c in range(class_count):
        tp = sum(1 for t, p in pairs if t == c and p == c)
        fp = sum(1 for t, p in pairs if t != c and p == c)
        fn = sum(1 for t, p in pairs if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    return {
        "accuracy": accuracy,
        "macro_precision": math.fsum(precisions) / class_count,
        "macro_recall": math.fsum(recalls) / class_count,
        "macro_f1": math.fsum(f1s) / class_count,
    }
