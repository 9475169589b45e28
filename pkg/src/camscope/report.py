"""End-to-end analysis runs: compute every artifact and write a report bundle.

The bundle layout under the output directory::

    index.json                           machine-readable inventory
    matrices/<metric>/<model>.csv        per-image metric values
    aggregated/<metric>/<augmentation>.csv   seed means
    boxplots/<metric>.csv|.svg           distribution summaries
    correlation/<metric>.csv|.svg        augmentation x augmentation maps
    tables/pair_frequency_*.csv|.md      top-k pair counts across metrics
    segmentation/<metric>.csv            stats per correctness segment
    extremes/extremes.csv|.md            most affected images
    scores/models.csv, scores/augmentations.csv|.md|*.svg   classifier scores

Identical inputs produce byte-identical bundles; nothing here depends on
time, environment, or the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import metrics as metrics_mod
from .analysis import (
    AGGREGATE_UNDEFINED,
    BoxplotStats,
    CorrelationMap,
    SegmentLabel,
    aggregate_over_seeds,
    boxplot_stats,
    compute_metric_matrices,
    correlation_map,
    extreme_image_scores,
    pair_frequency_tables,
    rank_pairs,
    segment_by_correctness,
    segmented_boxplots,
)
from .errors import AnalysisError, CamscopeError
from .interchange import Dataset, DatasetManifest, read_manifest, validate_dataset
from .model import (
    AggregatedMetricVector,
    DEFAULT_KLD_EPSILON,
    MetricId,
    MetricMatrix,
    ModelId,
)
from .svgplot import render_bars, render_boxplot, render_cam_grid, render_heatmap

FORMATS = ("csv", "md", "svg")
SCORE_NAMES = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


def default_metrics(kld_epsilon: float = DEFAULT_KLD_EPSILON) -> tuple[MetricId, ...]:
    """The standard eight-metric panel."""
    return (
        MetricId("mad"),
        MetricId("msd"),
        MetricId("pearson"),
        MetricId("spearman"),
        MetricId("overlap_rate", 20.0),
        MetricId("overlap_rate", 10.0),
        MetricId("overlap_rate", 5.0),
        MetricId("class_kld", kld_epsilon),
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything a report run needs; flags and config files build this."""

    manifest_path: str
    out_dir: str
    metrics: tuple[MetricId, ...] = field(default_factory=default_metrics)
    k: int = 4
    correlation_method: str = "pearson"
    workers: int = 0  # 0 means one per logical processor
    formats: tuple[str, ...] = FORMATS
    listwise: bool = False

    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return os.cpu_count() or 1


@dataclass
class RunResult:
    """Artifacts of one report run, with the index already written."""

    out_dir: Path
    index: dict
    matrices: dict[tuple[str, str], MetricMatrix]
    aggregated: dict[tuple[str, str], AggregatedMetricVector]
    correlations: dict[str, CorrelationMap]


def _progress(message: str) -> None:
    print(f"camscope: {message}", file=sys.stderr, flush=True)


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _num(value: float) -> str:
    return repr(float(value))


def _boxplot_row(label_cells: list, stats: BoxplotStats) -> list:
    return label_cells + [
        stats.defined_count,
        stats.undefined_count,
        _num(stats.q1),
        _num(stats.median),
        _num(stats.q3),
        _num(stats.whisker_low),
        _num(stats.whisker_high),
        ";".join(_num(v) for v in stats.outliers),
    ]


_BOXPLOT_COLUMNS = [
    "defined_count",
    "undefined_count",
    "q1",
    "median",
    "q3",
    "whisker_low",
    "whisker_high",
    "outliers",
]


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def run_report(config: RunConfig) -> RunResult:
    """Validate the dataset, compute every analysis artifact, write the bundle.

    Raises :class:`~camscope.errors.ManifestError` on a malformed manifest and
    :class:`~camscope.errors.CamscopeError` on content-validation failures.
    """
    manifest = read_manifest(config.manifest_path)
    _progress(f"validating dataset {manifest.dataset_name!r}")
    report = validate_dataset(manifest)
    if not report.ok:
        raise CamscopeError(f"dataset failed validation:\n{report}")
    dataset = Dataset(manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = tuple(config.formats)
    want_csv = "csv" in formats
    want_md = "md" in formats
    want_svg = "svg" in formats
    workers = config.effective_workers()
    index: dict = {
        "dataset_name": manifest.dataset_name,
        "augmentations": list(manifest.augmentations),
        "seeds": list(manifest.seed_labels),
        "image_count": len(manifest.image_ids),
        "class_count": manifest.class_count,
        "config": {
            "metrics": [m.key for m in config.metrics],
            "k": config.k,
            "correlation_method": config.correlation_method,
            "formats": list(formats),
            "listwise": config.listwise,
        },
        "metrics": {},
        "tables": {},
        "segmentation": {},
        "extremes": {},
        "scores": {},
        "warnings": [],
    }

    # per-model metric matrices, one fused pass per model
    matrices: dict[tuple[str, str], MetricMatrix] = {}
    for entry in manifest.augmented_entries:
        _progress(f"computing metrics for model {entry.model.key}")
        for matrix in compute_metric_matrices(dataset, config.metrics, entry.model, workers=workers):
            matrices[(matrix.metric.key, entry.model.key)] = matrix

    aggregated: dict[tuple[str, str], AggregatedMetricVector] = {}
    correlations: dict[str, CorrelationMap] = {}
    usable_maps: list[CorrelationMap] = []

    for metric in config.metrics:
        metric_index: dict = {}
        file_key = metric.file_key
        if want_csv:
            matrix_paths = {}
            for entry in manifest.augmented_entries:
                matrix = matrices[(metric.key, entry.model.key)]
                path = out / "matrices" / file_key / f"{entry.model.key}.csv"
                rows = []
                for image_id in manifest.image_ids:
                    if image_id in matrix.entries:
                        rows.append([image_id, _num(matrix.entries[image_id]), ""])
                    else:
                        rows.append([image_id, "", matrix.undefined[image_id]])
                _write_csv(path, ["image_id", "value", "reason"], rows)
                matrix_paths[entry.model.key] = str(path.relative_to(out))
            metric_index["matrices"] = matrix_paths

        # seed means per augmentation
        aggregated_paths = {}
        for augmentation in manifest.augmentations:
            group = [
                matrices[(metric.key, entry.model.key)]
                for entry in manifest.augmented_entries
                if entry.model.augmentation == augmentation
            ]
            vector = aggregate_over_seeds(group, image_order=manifest.image_ids)
            aggregated[(metric.key, augmentation)] = vector
            if want_csv:
                path = out / "aggregated" / file_key / f"{augmentation}.csv"
                rows = []
                for image_id in manifest.image_ids:
                    if image_id in vector.entries:
                        rows.append(
                            [image_id, _num(vector.entries[image_id]), vector.contributing[image_id], ""]
                        )
                    else:
                        rows.append([image_id, "", 0, vector.undefined[image_id]])
                _write_csv(path, ["image_id", "value", "contributing_seeds", "reason"], rows)
                aggregated_paths[augmentation] = str(path.relative_to(out))
        if aggregated_paths:
            metric_index["aggregated"] = aggregated_paths

        # distribution summaries
        stats_by_aug: dict[str, BoxplotStats] = {}
        for augmentation in manifest.augmentations:
            vector = aggregated[(metric.key, augmentation)]
            if vector.entries:
                stats_by_aug[augmentation] = boxplot_stats(vector)
            else:
                index["warnings"].append(
                    f"metric {metric.key}: augmentation {augmentation} has no defined values"
                )
        if want_csv and stats_by_aug:
            path = out / "boxplots" / f"{file_key}.csv"
            _write_csv(
                path,
                ["augmentation"] + _BOXPLOT_COLUMNS,
                [_boxplot_row([aug], s) for aug, s in stats_by_aug.items()],
            )
            metric_index["boxplots"] = str(path.relative_to(out))
        if want_svg and stats_by_aug:
            path = out / "boxplots" / f"{file_key}.svg"
            _write_text(path, render_boxplot(stats_by_aug, f"{metric.key} by augmentation"))
            metric_index["boxplots_svg"] = str(path.relative_to(out))

        # augmentation correlation structure
        vectors = [aggregated[(metric.key, a)] for a in manifest.augmentations]
        cmap = None
        if len(vectors) >= 2:
            try:
                cmap = correlation_map(
                    vectors, method=config.correlation_method, listwise=config.listwise
                )
            except AnalysisError as exc:
                index["warnings"].append(f"metric {metric.key}: correlation skipped ({exc})")
        if cmap is not None:
            correlations[metric.key] = cmap
            metric_index["correlation_sample_count"] = cmap.sample_count
            if cmap.degenerate_pairs:
                metric_index["degenerate_pairs"] = [list(p) for p in cmap.degenerate_pairs]
            finite_pairs = len(cmap.pairs()) - len(cmap.degenerate_pairs)
            if finite_pairs >= config.k:
                usable_maps.append(cmap)
            else:
                index["warnings"].append(
                    f"metric {metric.key}: only {finite_pairs} rankable pairs, "
                    f"excluded from frequency tables"
                )
            if want_csv:
                path = out / "correlation" / f"{file_key}.csv"
                rows = []
                for i, a in enumerate(cmap.augmentations):
                    rows.append([a] + [_num(v) for v in cmap.matrix[i]])
                _write_csv(path, ["augmentation"] + list(cmap.augmentations), rows)
                metric_index["correlation"] = str(path.relative_to(out))
            if want_svg:
                path = out / "correlation" / f"{file_key}.svg"
                _write_text(path, render_heatmap(cmap))
                metric_index["correlation_svg"] = str(path.relative_to(out))

        index["metrics"][metric.key] = metric_index

    # top-k pair frequencies across metrics
    _progress("ranking augmentation pairs")
    if usable_maps:
        strongest, weakest = pair_frequency_tables(usable_maps, config.k)
        for table in (strongest, weakest):
            name = f"pair_frequency_{table.direction}"
            rows = [[a, b, count] for (a, b), count in table.counts.items()]
            if want_csv:
                path = out / "tables" / f"{name}.csv"
                _write_csv(path, ["augmentation_a", "augmentation_b", "count"], rows)
                index["tables"][f"{table.direction}_csv"] = str(path.relative_to(out))
            if want_md:
                path = out / "tables" / f"{name}.md"
                md_rows = [[f"{a} / {b}", str(count)] for (a, b), count in table.counts.items()]
                text = (
                    f"## {table.direction.capitalize()} pairs "
                    f"(top-{table.k} over {table.metric_count} metrics)\n\n"
                )
                _write_text(path, text + _markdown_table(["pair", "count"], md_rows))
                index["tables"][f"{table.direction}_md"] = str(path.relative_to(out))
        index["tables"]["k"] = config.k
        index["tables"]["metric_count"] = strongest.metric_count
    else:
        index["warnings"].append("no metric produced enough rankable pairs for frequency tables")

    # correctness segmentation per metric and model
    _progress("segmenting by correctness")
    segmentations = {
        (entry.model.augmentation, entry.model.seed): segment_by_correctness(
            dataset, entry.model.augmentation, entry.model.seed
        )
        for entry in manifest.augmented_entries
    }
    if want_csv:
        for metric in config.metrics:
            rows = []
            for entry in manifest.augmented_entries:
                model = entry.model
                matrix = matrices[(metric.key, model.key)]
                if not matrix.entries:
                    continue
                segments = segmented_boxplots(matrix, segmentations[(model.augmentation, model.seed)])
                for label, stats in segments.items():
                    rows.append(_boxplot_row([model.augmentation, model.seed, label.value], stats))
            if rows:
                path = out / "segmentation" / f"{metric.file_key}.csv"
                _write_csv(path, ["augmentation", "seed", "segment"] + _BOXPLOT_COLUMNS, rows)
                index["segmentation"][metric.key] = str(path.relative_to(out))

    # most affected images
    _progress("selecting extreme images")
    extreme_rows = []
    for metric in config.metrics:
        vectors = [aggregated[(metric.key, a)] for a in manifest.augmentations]
        for statistic in ("mean", "stdev"):
            try:
                scores = extreme_image_scores(vectors, statistic)
            except AnalysisError as exc:
                index["warnings"].append(f"metric {metric.key}: extremes skipped ({exc})")
                continue
            best = None
            for candidate, value in scores.items():
                if best is None or value > best[1]:
                    best = (candidate, value)
            image_id, score = best
            extreme_rows.append([metric.key, statistic, image_id, _num(score)])
            index["extremes"].setdefault(metric.key, {})[statistic] = {
                "image_id": image_id,
                "score": score,
            }
    if want_csv and extreme_rows:
        path = out / "extremes" / "extremes.csv"
        _write_csv(path, ["metric", "statistic", "image_id", "score"], extreme_rows)
        index["extremes"]["csv"] = str(path.relative_to(out))
    if want_md and extreme_rows:
        path = out / "extremes" / "extremes.md"
        text = "## Most affected images\n\n" + _markdown_table(
            ["metric", "statistic", "image", "score"],
            [[m, s, i, f"{float(v):.6g}"] for m, s, i, v in extreme_rows],
        )
        _write_text(path, text)
        index["extremes"]["md"] = str(path.relative_to(out))

    # classifier performance
    _progress("scoring classifier performance")
    truth = dataset.ground_truth()
    model_rows = []
    scores_by_model: dict[str, metrics_mod.MacroScores] = {}
    for entry in manifest.models:
        records = dataset.predictions(entry.model)
        cm = metrics_mod.confusion_matrix(records, truth)
        scores = metrics_mod.macro_scores(cm)
        breakdown = metrics_mod.class_score_breakdown(cm)
        scores_by_model[entry.model.key] = scores
        model_rows.append(
            [
                entry.model.key,
                entry.model.kind,
                entry.model.augmentation or "",
                entry.model.seed or "",
                _num(scores.accuracy),
                _num(scores.macro_precision),
                _num(scores.macro_recall),
                _num(scores.macro_f1),
                ";".join(str(c) for c in breakdown.degenerate_classes),
            ]
        )
    aug_rows = []
    bars: dict[str, dict[str, float]] = {name: {} for name in SCORE_NAMES}
    baseline_scores = scores_by_model["baseline"]
    aug_rows.append(["baseline"] + [_num(getattr(baseline_scores, n)) for n in SCORE_NAMES])
    for name in SCORE_NAMES:
        bars[name]["baseline"] = getattr(baseline_scores, name)
    for augmentation in manifest.augmentations:
        keys = [
            entry.model.key
            for entry in manifest.augmented_entries
            if entry.model.augmentation == augmentation
        ]
        means = {
            name: math.fsum(getattr(scores_by_model[k], name) for k in keys) / len(keys)
            for name in SCORE_NAMES
        }
        aug_rows.append([augmentation] + [_num(means[n]) for n in SCORE_NAMES])
        for name in SCORE_NAMES:
            bars[name][augmentation] = means[name]
    if want_csv:
        path = out / "scores" / "models.csv"
        _write_csv(
            path,
            ["model", "kind", "augmentation", "seed"] + list(SCORE_NAMES) + ["degenerate_classes"],
            model_rows,
        )
        index["scores"]["models"] = str(path.relative_to(out))
        path = out / "scores" / "augmentations.csv"
        _write_csv(path, ["augmentation"] + list(SCORE_NAMES), aug_rows)
        index["scores"]["augmentations"] = str(path.relative_to(out))
    if want_md:
        path = out / "scores" / "augmentations.md"
        md_rows = [[row[0]] + [f"{float(v):.4f}" for v in row[1:]] for row in aug_rows]
        _write_text(
            path,
            "## Classifier scores (seed means)\n\n"
            + _markdown_table(["model"] + list(SCORE_NAMES), md_rows),
        )
        index["scores"]["augmentations_md"] = str(path.relative_to(out))
    if want_svg:
        for name in SCORE_NAMES:
            path = out / "scores" / f"{name}.svg"
            _write_text(path, render_bars(bars[name], f"{name} by augmentation"))
            index["scores"][f"{name}_svg"] = str(path.relative_to(out))

    index_path = out / "index.json"
    _write_text(index_path, json.dumps(index, indent=2, sort_keys=True) + "\n")
    _progress(f"report written to {out}")
    return RunResult(
        out_dir=out,
        index=index,
        matrices=matrices,
        aggregated=aggregated,
        correlations=correlations,
    )


def run_extremes(
    config: RunConfig, metric: MetricId, statistic: str
) -> tuple[str, Path]:
    """Find the most affected image for one metric and render its map grid.

    Writes ``extreme_<metric>_<statistic>.svg`` and a JSON sidecar into the
    output directory; returns the winning image id and the SVG path.
    """
    manifest = read_manifest(config.manifest_path)
    report = validate_dataset(manifest)
    if not report.ok:
        raise CamscopeError(f"dataset failed validation:\n{report}")
    dataset = Dataset(manifest)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = config.effective_workers()

    by_aug: dict[str, list[MetricMatrix]] = {a: [] for a in manifest.augmentations}
    per_model: dict[str, MetricMatrix] = {}
    for entry in manifest.augmented_entries:
        matrix = compute_metric_matrices(dataset, [metric], entry.model, workers=workers)[0]
        by_aug[entry.model.augmentation].append(matrix)
        per_model[entry.model.key] = matrix
    vectors = [
        aggregate_over_seeds(by_aug[a], image_order=manifest.image_ids)
        for a in manifest.augmentations
    ]
    scores = extreme_image_scores(vectors, statistic)
    image_id = None
    best = -math.inf
    for candidate, score in scores.items():
        if score > best:
            image_id, best = candidate, score

    cells = [("baseline", dataset.cam(ModelId.baseline(), image_id), "reference")]
    model_values: dict[str, float | None] = {}
    for entry in manifest.augmented_entries:
        matrix = per_model[entry.model.key]
        value = matrix.entries.get(image_id)
        model_values[entry.model.key] = value
        annotation = f"{metric.key}={value:.4f}" if value is not None else "undefined"
        cells.append((entry.model.key, dataset.cam(entry.model, image_id), annotation))

    stem = f"extreme_{metric.file_key}_{statistic}"
    svg_path = out / f"{stem}.svg"
    title = f"image {image_id}: highest {statistic} of {metric.key}"
    _write_text(svg_path, render_cam_grid(cells, title, columns=max(2, len(manifest.seed_labels) + 1)))
    sidecar = {
        "image_id": image_id,
        "metric": metric.key,
        "statistic": statistic,
        "score": best,
        "per_model": model_values,
        "per_augmentation": {
            v.augmentation: v.entries.get(image_id) for v in vectors
        },
        "svg": svg_path.name,
    }
    _write_text(out / f"{stem}.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return image_id, svg_path
