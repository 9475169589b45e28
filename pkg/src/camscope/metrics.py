"""Similarity metrics between activation maps and between prediction vectors.

Every kernel computes in float64 with a fixed, input-order reduction so that
results are bit-identical across runs and worker counts. Convention for all
pairwise metrics: ``p`` comes from the augmented model, ``q`` from the
baseline.

Correlation kernels return ``None`` instead of a value when the input is
degenerate (zero variance); callers turn that into an undefined entry with a
reason code rather than a silent number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .errors import MetricError
from .model import Cam, MetricId, PredictionRecord

# Guards the class_kld denominator; the printed formula only guards the log
# argument, so a zero probability would otherwise divide by zero.
KLD_DENOMINATOR_FLOOR = 1e-12


def _paired(p: Cam, q: Cam) -> tuple[np.ndarray, np.ndarray]:
    if (p.height, p.width) != (q.height, q.width):
        raise MetricError(
            f"dimension mismatch: {p.height}x{p.width} vs {q.height}x{q.width}"
        )
    return p.values, q.values


def mad(p: Cam, q: Cam) -> float:
    """Mean absolute difference; 0 means identical maps."""
    a, b = _paired(p, q)
    return float(np.mean(np.abs(a - b)))


def msd(p: Cam, q: Cam) -> float:
    """Mean squared difference; emphasizes large local deviations."""
    a, b = _paired(p, q)
    d = a - b
    return float(np.mean(d * d))


def pearson_values(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson correlation of two equal-length vectors.

    Uses population moments. Returns ``None`` when either side has zero
    variance. Identical inputs short-circuit to exactly 1.0.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise MetricError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise MetricError("correlation needs at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(np.mean(dx * dx)))
    sy = math.sqrt(float(np.mean(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        return None
    if np.array_equal(x, y):
        return 1.0
    r = float(np.mean(dx * dy)) / (sx * sy)
    # round-off can push |r| a few ulp past 1
    return min(1.0, max(-1.0, r))


def pearson(p: Cam, q: Cam) -> float | None:
    """Pearson correlation of the flattened maps; ``None`` on constant input."""
    a, b = _paired(p, q)
    return pearson_values(a, b)


def rank_transform(values) -> np.ndarray:
    """Replace each value by its 1-based rank; ties get the mean of their ranks.

    Example: [0.2, 0.2, 0.2, 0.9] -> [2, 2, 2, 4].
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise MetricError("cannot rank an empty vector")
    if not np.all(np.isfinite(v)):
        raise MetricError("cannot rank non-finite values")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sorted_vals = v[order]
    start = 0
    while start < v.size:
        stop = start + 1
        while stop < v.size and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        # positions start..stop-1 share the value; mean of ranks start+1..stop
        mean_rank = (start + 1 + stop) / 2.0
        ranks[order[start:stop]] = mean_rank
        start = stop
    return ranks


def spearman_values(x: np.ndarray, y: np.ndarray) -> float | None:
    """Spearman correlation: Pearson over rank-transformed vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise MetricError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise MetricError("correlation needs at least 2 values")
    return pearson_values(rank_transform(x), rank_transform(y))


def spearman(p: Cam, q: Cam) -> float | None:
    """Spearman rank correlation of the flattened maps; ``None`` on constant ranks."""
    a, b = _paired(p, q)
    return spearman_values(a, b)


def top_fraction_mask(values: np.ndarray, percentile: float) -> np.ndarray:
    """Boolean mask of the top ``percentile`` percent of ``values``.

    The threshold is the k-th largest value with k = ceil(N * percentile / 100);
    every element >= the threshold is selected, so ties at the threshold can
    expand the set beyond k elements.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise MetricError("cannot threshold an empty vector")
    if not 0.0 < percentile < 100.0:
        raise MetricError(f"percentile must be inside (0, 100), got {percentile!r}")
    # exact ceiling, immune to float round-off at integer boundaries
    k = math.ceil(Fraction(n) * Fraction(percentile) / 100)
    threshold = np.partition(v, n - k)[n - k]
    return v >= threshold


def overlap_rate(p: Cam, q: Cam, percentile: float) -> float:
    """Intersection-over-union of the two maps' top-``percentile`` pixel sets."""
    a, b = _paired(p, q)
    mask_p = top_fraction_mask(a, percentile)
    mask_q = top_fraction_mask(b, percentile)
    union = int(np.count_nonzero(mask_p | mask_q))
    inter = int(np.count_nonzero(mask_p & mask_q))
    return inter / union


def class_kld_values(p: np.ndarray, q: np.ndarray, epsilon: float) -> float:
    """Regularized KL divergence sum(q_i * ln(epsilon + q_i / p_i)).

    ``p`` is the augmented model's distribution, ``q`` the baseline's. Terms
    with q_i = 0 contribute exactly 0. The denominator is floored at
    ``KLD_DENOMINATOR_FLOOR``; with epsilon = 0 a zero p_i opposite a positive
    q_i is an infinite divergence and raises instead of returning the floored
    approximation.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.size != q.size:
        raise MetricError(f"length mismatch: {p.size} vs {q.size}")
    if epsilon < 0.0:
        raise MetricError(f"epsilon must be >= 0, got {epsilon!r}")
    if epsilon == 0.0 and bool(np.any((p == 0.0) & (q > 0.0))):
        raise MetricError(
            "infinite divergence: zero augmented probability against positive baseline mass"
        )
    mask = q > 0.0
    if not np.any(mask):
        return 0.0
    qm = q[mask]
    pm = np.maximum(p[mask], KLD_DENOMINATOR_FLOOR)
    # fsum keeps the reduction exactly rounded; terms can reach ln(1/floor)
    return math.fsum((qm * np.log(epsilon + qm / pm)).tolist())


def class_kld(p: PredictionRecord, q: PredictionRecord, epsilon: float) -> float:
    """Class-probability divergence between an augmented and a baseline prediction."""
    return class_kld_values(p.probabilities, q.probabilities, epsilon)


# --- metric registry -------------------------------------------------------

# name -> kernel(p_cam, q_cam, parameter) for map metrics
_CAM_KERNELS: dict[str, Callable[[Cam, Cam, float | None], float | None]] = {
    "mad": lambda p, q, _: mad(p, q),
    "msd": lambda p, q, _: msd(p, q),
    "pearson": lambda p, q, _: pearson(p, q),
    "spearman": lambda p, q, _: spearman(p, q),
    "overlap_rate": lambda p, q, y: overlap_rate(p, q, y),
}

# name -> kernel(p_record, q_record, parameter) for prediction metrics
_PREDICTION_KERNELS: dict[
    str, Callable[[PredictionRecord, PredictionRecord, float | None], float | None]
] = {
    "class_kld": lambda p, q, eps: class_kld(p, q, eps),
}

# reason code attached to undefined matrix entries, per metric name
UNDEFINED_REASONS: dict[str, str] = {
    "pearson": "zero_variance",
    "spearman": "zero_rank_variance",
}


def register_cam_metric(
    name: str, kernel: Callable[[Cam, Cam, float | None], float | None], undefined_reason: str = "undefined"
) -> None:
    """Register an additional map metric under ``name``."""
    _CAM_KERNELS[name] = kernel
    UNDEFINED_REASONS.setdefault(name, undefined_reason)


def is_prediction_metric(metric: MetricId) -> bool:
    return metric.name in _PREDICTION_KERNELS


def evaluate_cam_metric(metric: MetricId, p: Cam, q: Cam) -> float | None:
    """Evaluate a map metric; ``None`` marks a degenerate (undefined) result."""
    try:
        kernel = _CAM_KERNELS[metric.name]
    except KeyError:
        raise MetricError(f"unknown map metric: {metric.name!r}") from None
    return kernel(p, q, metric.parameter)


def evaluate_prediction_metric(
    metric: MetricId, p: PredictionRecord, q: PredictionRecord
) -> float | None:
    """Evaluate a prediction metric; ``None`` marks a degenerate result."""
    try:
        kernel = _PREDICTION_KERNELS[metric.name]
    except KeyError:
        raise MetricError(f"unknown prediction metric: {metric.name!r}") from None
    return kernel(p, q, metric.parameter)


def undefined_reason(metric: MetricId) -> str:
    return UNDEFINED_REASONS.get(metric.name, "undefined")


# --- classifier performance ------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count table; rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MetricError(f"confusion matrix must be square, got shape {c.shape}")
        if np.any(c < 0):
            raise MetricError("confusion matrix counts must be non-negative")

    @property
    def class_count(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MacroScores:
    """Accuracy plus unweighted class means of precision, recall, and F1."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


@dataclass(frozen=True)
class ClassScoreBreakdown:
    """Per-class one-vs-rest scores backing a :class:`MacroScores`.

    ``degenerate_classes`` lists classes with neither predicted nor actual
    positives; their scores are defined as 0 and flagged for report metadata.
    """

    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    degenerate_classes: tuple[int, ...]


def confusion_matrix(
    predictions: Mapping[str, PredictionRecord] | list[PredictionRecord],
    truth: Mapping[str, int],
) -> ConfusionMatrix:
    """Tally predicted against true classes over a shared image set."""
    records = list(predictions.values()) if isinstance(predictions, Mapping) else list(predictions)
    if not records:
        raise MetricError("cannot build a confusion matrix from zero predictions")
    class_count = records[0].probabilities.size
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    for record in records:
        try:
            label = truth[record.image_id]
        except KeyError:
            raise MetricError(f"no ground-truth label for image {record.image_id!r}") from None
        if not 0 <= label < class_count:
            raise MetricError(
                f"label {label} for image {record.image_id!r} outside 0..{class_count - 1}"
            )
        counts[label, record.predicted_class] += 1
    counts.setflags(write=False)
    return ConfusionMatrix(counts=counts)


def _safe_ratio(numerator: float, denominator: float) -> float:
    # 0/0 ratios are defined as 0 throughout the score computations
    return numerator / denominator if denominator != 0.0 else 0.0


def class_score_breakdown(cm: ConfusionMatrix) -> ClassScoreBreakdown:
    """Per-class one-vs-rest precision, recall, and F1."""
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)
    actual = counts.sum(axis=1).astype(np.float64)
    precision = []
    recall = []
    f1 = []
    degenerate = []
    for i in range(cm.class_count):
        p_i = _safe_ratio(float(tp[i]), float(predicted[i]))
        r_i = _safe_ratio(float(tp[i]), float(actual[i]))
        f_i = _safe_ratio(2.0 * p_i * r_i, p_i + r_i)
        precision.append(p_i)
        recall.append(r_i)
        f1.append(f_i)
        if predicted[i] == 0.0 and actual[i] == 0.0:
            degenerate.append(i)
    return ClassScoreBreakdown(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        degenerate_classes=tuple(degenerate),
    )


def macro_scores(cm: ConfusionMatrix) -> MacroScores:
    """Accuracy and unweighted macro precision/recall/F1 from a count table."""
    if cm.total == 0:
        raise MetricError("cannot score an empty confusion matrix")
    breakdown = class_score_breakdown(cm)
    n = cm.class_count
    return MacroScores(
        accuracy=float(np.trace(cm.counts)) / cm.total,
        macro_precision=math.fsum(breakdown.precision) / n,
        macro_recall=math.fsum(breakdown.recall) / n,
        macro_f1=math.fsum(breakdown.f1) / n,
    )
