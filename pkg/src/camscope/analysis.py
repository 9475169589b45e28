"""Batch analysis: metric matrices, seed aggregation, correlation structure.

All reductions run in a fixed order (manifest image order, seed-label order)
so results are bit-identical across runs and worker counts; parallelism only
fans out independent per-image computations.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import metrics as metrics_mod
from .errors import AnalysisError, MetricError
from .interchange import Dataset
from .model import AggregatedMetricVector, MetricId, MetricMatrix, ModelId

AGGREGATE_UNDEFINED = "all_seeds_undefined"
KLD_UNDEFINED = "infinite_divergence"


def compute_metric_matrices(
    dataset: Dataset,
    metric_ids: Sequence[MetricId],
    model: ModelId,
    workers: int = 1,
) -> list[MetricMatrix]:
    """Evaluate several metrics for one augmented model against the baseline.

    Each augmented map is read once and fed to every map metric. With
    ``workers`` > 1 images are processed concurrently; the output order is
    the manifest image order either way.
    """
    if model.is_baseline:
        raise AnalysisError("metric matrices compare augmented models against the baseline")
    metric_ids = list(metric_ids)
    baseline = ModelId.baseline()
    cam_metrics = [m for m in metric_ids if not metrics_mod.is_prediction_metric(m)]
    pred_metrics = [m for m in metric_ids if metrics_mod.is_prediction_metric(m)]

    base_preds = aug_preds = None
    if pred_metrics:
        base_preds = dataset.predictions(baseline)
        aug_preds = dataset.predictions(model)
    if cam_metrics:
        # warm the baseline cache serially so the fan-out only reads augmented maps
        for image_id in dataset.image_ids:
            dataset.cam(baseline, image_id)

    def evaluate(image_id: str) -> list[tuple[float | None, str | None]]:
        row: list[tuple[float | None, str | None]] = []
        if cam_metrics:
            try:
                aug_cam = dataset.cam(model, image_id)
            except FileNotFoundError:
                raise AnalysisError(f"model {model.key!r} has no map for {image_id!r}") from None
            base_cam = dataset.cam(baseline, image_id)
        for metric in metric_ids:
            if metrics_mod.is_prediction_metric(metric):
                try:
                    p = aug_preds[image_id]
                    q = base_preds[image_id]
                except KeyError:
                    raise AnalysisError(f"no prediction for {image_id!r}") from None
                try:
                    value = metrics_mod.evaluate_prediction_metric(metric, p, q)
                except MetricError:
                    # infinite divergence at epsilon = 0: undefined, not fatal
                    row.append((None, KLD_UNDEFINED))
                    continue
            else:
                value = metrics_mod.evaluate_cam_metric(metric, aug_cam, base_cam)
            if value is None:
                row.append((None, metrics_mod.undefined_reason(metric)))
            else:
                row.append((value, None))
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, dataset.image_ids))
    else:
        rows = [evaluate(image_id) for image_id in dataset.image_ids]

    matrices = []
    for index, metric in enumerate(metric_ids):
        entries: dict[str, float] = {}
        undefined: dict[str, str] = {}
        for image_id, row in zip(dataset.image_ids, rows):
            value, reason = row[index]
            if value is None:
                undefined[image_id] = reason or "undefined"
            else:
                entries[image_id] = value
        matrices.append(MetricMatrix(metric=metric, model=model, entries=entries, undefined=undefined))
    return matrices


def compute_metric_matrix(
    dataset: Dataset, metric: MetricId, model: ModelId, workers: int = 1
) -> MetricMatrix:
    """Evaluate one metric for one augmented model against the baseline."""
    return compute_metric_matrices(dataset, [metric], model, workers=workers)[0]


def aggregate_over_seeds(
    matrices: Sequence[MetricMatrix], image_order: Sequence[str] | None = None
) -> AggregatedMetricVector:
    """Mean each image's metric values over seeds, skipping undefined entries.

    An image stays undefined only when every seed is undefined. Summation
    runs in seed-label order so the result does not depend on input order.
    ``image_order`` pins the output ordering (defaults to the first matrix's
    iteration order).
    """
    if not matrices:
        raise AnalysisError("cannot aggregate zero matrices")
    metric = matrices[0].metric
    augmentation = matrices[0].model.augmentation
    if any(m.metric != metric for m in matrices):
        raise AnalysisError("cannot aggregate across different metrics")
    if any(m.model.is_baseline or m.model.augmentation != augmentation for m in matrices):
        raise AnalysisError("cannot aggregate across different augmentations")
    seeds = [m.model.seed for m in matrices]
    if len(set(seeds)) != len(seeds):
        raise AnalysisError(f"duplicate seeds in aggregation: {sorted(seeds)}")
    ordered = sorted(matrices, key=lambda m: m.model.seed)

    universe = set(ordered[0].entries) | set(ordered[0].undefined)
    for m in ordered[1:]:
        if (set(m.entries) | set(m.undefined)) != universe:
            raise AnalysisError("matrices cover different image sets")
    if image_order is None:
        image_order = list(ordered[0].entries) + [
            i for i in ordered[0].undefined if i not in ordered[0].entries
        ]
    else:
        if set(image_order) != universe:
            raise AnalysisError("image_order does not match the matrices' image set")

    entries: dict[str, float] = {}
    undefined: dict[str, str] = {}
    contributing: dict[str, int] = {}
    for image_id in image_order:
        values = [m.entries[image_id] for m in ordered if image_id in m.entries]
        if values:
            entries[image_id] = math.fsum(values) / len(values)
            contributing[image_id] = len(values)
        else:
            undefined[image_id] = AGGREGATE_UNDEFINED
            contributing[image_id] = 0
    return AggregatedMetricVector(
        metric=metric,
        augmentation=augmentation,
        entries=entries,
        undefined=undefined,
        contributing=contributing,
        seed_count=len(ordered),
    )


@dataclass(frozen=True)
class BoxplotStats:
    """Tukey box-and-whisker summary of one distribution."""

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]
    defined_count: int
    undefined_count: int


def boxplot_stats(data) -> BoxplotStats:
    """Tukey statistics with linear-interpolation quartiles.

    Whiskers sit on the most extreme data points within 1.5 IQR of the
    quartiles; points beyond the whiskers are outliers. Accepts a metric
    matrix, an aggregated vector, or a plain value sequence.
    """
    if hasattr(data, "entries"):
        values = list(data.entries.values())
        undefined_count = len(data.undefined)
    else:
        values = [float(v) for v in data]
        undefined_count = 0
    if not values:
        raise AnalysisError("boxplot needs at least one defined value")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    q1, median, q3 = (float(v) for v in np.percentile(arr, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    whisker_low = float(arr[arr >= low_fence][0])
    whisker_high = float(arr[arr <= high_fence][-1])
    outliers = tuple(float(v) for v in arr[(arr < whisker_low) | (arr > whisker_high)])
    return BoxplotStats(
        median=median,
        q1=q1,
        q3=q3,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
        defined_count=len(values),
        undefined_count=undefined_count,
    )


@dataclass(frozen=True)
class CorrelationMap:
    """Symmetric augmentation-by-augmentation correlation matrix for one metric.

    Degenerate pairs (zero variance on either side) hold NaN and are listed
    in ``degenerate_pairs``.
    """

    metric: MetricId
    augmentations: tuple[str, ...]
    matrix: np.ndarray
    method: str
    sample_count: int
    degenerate_pairs: tuple[tuple[str, str], ...] = ()

    def value(self, a: str, b: str) -> float:
        i = self.augmentations.index(a)
        j = self.augmentations.index(b)
        return float(self.matrix[i, j])

    def pairs(self) -> list[tuple[str, str, float]]:
        """Off-diagonal pairs (a, b, value) with a < b positionally."""
        out = []
        for i in range(len(self.augmentations)):
            for j in range(i + 1, len(self.augmentations)):
                out.append((self.augmentations[i], self.augmentations[j], float(self.matrix[i, j])))
        return out


CORRELATION_METHODS = ("pearson", "spearman")


def correlation_map(
    vectors: Sequence[AggregatedMetricVector],
    method: str = "pearson",
    listwise: bool = False,
) -> CorrelationMap:
    """Correlate aggregated per-image values across augmentations.

    Undefined images are dropped pairwise by default; ``listwise`` restricts
    every pair to the images defined in all vectors. A pair sharing fewer
    than 2 defined images is an error.
    """
    vectors = list(vectors)
    if len(vectors) < 2:
        raise AnalysisError("a correlation map needs at least 2 augmentations")
    metric = vectors[0].metric
    if any(v.metric != metric for v in vectors):
        raise AnalysisError("cannot correlate vectors of different metrics")
    names = [v.augmentation for v in vectors]
    if len(set(names)) != len(names):
        raise AnalysisError(f"duplicate augmentations in correlation input: {sorted(names)}")
    if method not in CORRELATION_METHODS:
        raise AnalysisError(f"unknown correlation method {method!r}")
    universe = list(vectors[0].entries) + [
        i for i in vectors[0].undefined if i not in vectors[0].entries
    ]
    for v in vectors[1:]:
        if (set(v.entries) | set(v.undefined)) != set(universe):
            raise AnalysisError("vectors cover different image sets")

    if listwise:
        shared_all = [i for i in universe if all(i in v.entries for v in vectors)]

    n = len(vectors)
    matrix = np.eye(n, dtype=np.float64)
    degenerate: list[tuple[str, str]] = []
    sample_count: int | None = None
    for i in range(n):
        for j in range(i + 1, n):
            vi, vj = vectors[i], vectors[j]
            if listwise:
                shared = shared_all
            else:
                shared = [img for img in universe if img in vi.entries and img in vj.entries]
            if len(shared) < 2:
                raise AnalysisError(
                    f"pair ({names[i]}, {names[j]}) shares only {len(shared)} defined images"
                )
            sample_count = len(shared) if sample_count is None else min(sample_count, len(shared))
            x = np.array([vi.entries[img] for img in shared], dtype=np.float64)
            y = np.array([vj.entries[img] for img in shared], dtype=np.float64)
            if method == "pearson":
                r = metrics_mod.pearson_values(x, y)
            else:
                r = metrics_mod.spearman_values(x, y)
            if r is None:
                matrix[i, j] = matrix[j, i] = float("nan")
                degenerate.append((names[i], names[j]))
            else:
                matrix[i, j] = matrix[j, i] = r
    matrix.setflags(write=False)
    return CorrelationMap(
        metric=metric,
        augmentations=tuple(names),
        matrix=matrix,
        method=method,
        sample_count=int(sample_count),
        degenerate_pairs=tuple(degenerate),
    )


def _pair_name(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def rank_pairs(cmap: CorrelationMap, k: int) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """Top-k strongest and weakest correlated augmentation pairs.

    Ties break by lexicographic pair name in both directions. Degenerate
    (NaN) pairs never rank; ``k`` must not exceed the remaining pair count.
    """
    ranked = [
        (_pair_name(a, b), value) for a, b, value in cmap.pairs() if not math.isnan(value)
    ]
    if not 1 <= k <= len(ranked):
        raise AnalysisError(f"k={k} out of range: map has {len(ranked)} rankable pairs")
    strongest = [pair for pair, _ in sorted(ranked, key=lambda item: (-item[1], item[0]))][:k]
    weakest = [pair for pair, _ in sorted(ranked, key=lambda item: (item[1], item[0]))][:k]
    return strongest, weakest


@dataclass(frozen=True)
class PairFrequencyTable:
    """How often each augmentation pair reaches the top-k across metrics."""

    direction: str
    k: int
    counts: Mapping[tuple[str, str], int]
    metric_count: int

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def pair_frequency_tables(
    maps: Sequence[CorrelationMap], k: int
) -> tuple[PairFrequencyTable, PairFrequencyTable]:
    """Count strongest/weakest top-k appearances per pair over several metrics.

    Every map must cover the same augmentation set; counts of both tables sum
    to k times the number of maps.
    """
    maps = list(maps)
    if not maps:
        raise AnalysisError("frequency tables need at least one correlation map")
    aug_set = set(maps[0].augmentations)
    for cmap in maps[1:]:
        if set(cmap.augmentations) != aug_set:
            raise AnalysisError("correlation maps cover different augmentation sets")
    all_pairs = sorted(
        _pair_name(a, b) for i, a in enumerate(maps[0].augmentations)
        for b in maps[0].augmentations[i + 1:]
    )
    strongest_counts = {pair: 0 for pair in all_pairs}
    weakest_counts = {pair: 0 for pair in all_pairs}
    for cmap in maps:
        strongest, weakest = rank_pairs(cmap, k)
        for pair in strongest:
            strongest_counts[pair] += 1
        for pair in weakest:
            weakest_counts[pair] += 1
    return (
        PairFrequencyTable(direction="strongest", k=k, counts=strongest_counts, metric_count=len(maps)),
        PairFrequencyTable(direction="weakest", k=k, counts=weakest_counts, metric_count=len(maps)),
    )


class SegmentLabel(enum.Enum):
    """Joint correctness of the baseline and one augmented model."""

    BOTH_CORRECT = "both_correct"
    BASELINE_ONLY_CORRECT = "baseline_only_correct"
    AUGMENTED_ONLY_CORRECT = "augmented_only_correct"
    BOTH_WRONG = "both_wrong"


def segment_by_correctness(
    dataset: Dataset, augmentation: str, seed: str
) -> dict[str, SegmentLabel]:
    """Label every image by whether the baseline and the given model got it right."""
    model = ModelId.augmented(augmentation, seed)
    truth = dataset.ground_truth()
    base_preds = dataset.predictions(ModelId.baseline())
    aug_preds = dataset.predictions(model)
    labels: dict[str, SegmentLabel] = {}
    for image_id in dataset.image_ids:
        try:
            expected = truth[image_id]
            base_ok = base_preds[image_id].predicted_class == expected
            aug_ok = aug_preds[image_id].predicted_class == expected
        except KeyError:
            raise AnalysisError(f"no prediction or label for {image_id!r}") from None
        if base_ok and aug_ok:
            labels[image_id] = SegmentLabel.BOTH_CORRECT
        elif base_ok:
            labels[image_id] = SegmentLabel.BASELINE_ONLY_CORRECT
        elif aug_ok:
            labels[image_id] = SegmentLabel.AUGMENTED_ONLY_CORRECT
        else:
            labels[image_id] = SegmentLabel.BOTH_WRONG
    return labels


def merge_one_correct(segmentation: Mapping[str, SegmentLabel]) -> dict[str, str]:
    """Three-way view merging the two one-model-correct segments."""
    merged = {}
    for image_id, label in segmentation.items():
        if label in (SegmentLabel.BASELINE_ONLY_CORRECT, SegmentLabel.AUGMENTED_ONLY_CORRECT):
            merged[image_id] = "one_correct"
        else:
            merged[image_id] = label.value
    return merged


def segmented_boxplots(
    data, segmentation: Mapping[str, SegmentLabel]
) -> dict[SegmentLabel, BoxplotStats]:
    """Boxplot statistics per correctness segment.

    ``data`` is a metric matrix or aggregated vector whose image ids must all
    be covered by ``segmentation``. Segments without defined values are
    absent from the result.
    """
    image_ids = list(data.entries) + list(data.undefined)
    missing = [i for i in image_ids if i not in segmentation]
    if missing:
        raise AnalysisError(f"segmentation does not cover image {missing[0]!r}")
    stats: dict[SegmentLabel, BoxplotStats] = {}
    for label in SegmentLabel:
        values = [v for img, v in data.entries.items() if segmentation[img] is label]
        if not values:
            continue
        undefined_count = sum(1 for img in data.undefined if segmentation[img] is label)
        base = boxplot_stats(values)
        stats[label] = BoxplotStats(
            median=base.median,
            q1=base.q1,
            q3=base.q3,
            whisker_low=base.whisker_low,
            whisker_high=base.whisker_high,
            outliers=base.outliers,
            defined_count=base.defined_count,
            undefined_count=undefined_count,
        )
    return stats


EXTREME_STATISTICS = ("mean", "stdev")


def extreme_image_scores(
    vectors: Sequence[AggregatedMetricVector], statistic: str
) -> dict[str, float]:
    """Per-image mean or population stdev across augmentations.

    Only images defined in every vector participate; iteration follows the
    first vector's entry order (manifest order).
    """
    vectors = list(vectors)
    if not vectors:
        raise AnalysisError("extreme-image scan needs at least one vector")
    if statistic not in EXTREME_STATISTICS:
        raise AnalysisError(f"unknown statistic {statistic!r}; pick one of {EXTREME_STATISTICS}")
    if statistic == "stdev" and len(vectors) < 2:
        raise AnalysisError("spread across augmentations needs at least 2 vectors")
    scores: dict[str, float] = {}
    for image_id in vectors[0].entries:
        if not all(image_id in v.entries for v in vectors):
            continue
        values = np.array([v.entries[image_id] for v in vectors], dtype=np.float64)
        if statistic == "mean":
            scores[image_id] = float(values.mean())
        else:
            deviations = values - values.mean()
            scores[image_id] = math.sqrt(float(np.mean(deviations * deviations)))
    if not scores:
        raise AnalysisError("no image is defined across all augmentations")
    return scores


def find_extreme_images(vectors: Sequence[AggregatedMetricVector], statistic: str) -> str:
    """Image id with the largest mean or spread; ties keep the earliest image."""
    scores = extreme_image_scores(vectors, statistic)
    best_id = None
    best = -math.inf
    for image_id, score in scores.items():
        if score > best:
            best_id = image_id
            best = score
    return best_id
