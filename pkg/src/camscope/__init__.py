"""camscope: measure how data augmentation shifts what CNN classifiers look at.

Given class activation maps and predictions from a baseline model and a grid
of augmentation x seed retrainings, this package computes map- and
prediction-similarity metrics, aggregates them over seeds, correlates
augmentations against each other, ranks the closest and most distant pairs,
and writes a reproducible report bundle.
"""

from .analysis import (
    BoxplotStats,
    CorrelationMap,
    PairFrequencyTable,
    SegmentLabel,
    aggregate_over_seeds,
    boxplot_stats,
    compute_metric_matrix,
    compute_metric_matrices,
    correlation_map,
    extreme_image_scores,
    find_extreme_images,
    merge_one_correct,
    pair_frequency_tables,
    rank_pairs,
    segment_by_correctness,
    segmented_boxplots,
)
from .errors import (
    AnalysisError,
    CamscopeError,
    FormatError,
    ManifestError,
    MetricError,
    ValidationError,
)
from .interchange import (
    Dataset,
    DatasetManifest,
    ModelEntry,
    ValidationReport,
    read_cam,
    read_ground_truth,
    read_manifest,
    read_predictions,
    validate_dataset,
    write_cam,
    write_ground_truth,
    write_manifest,
    write_predictions,
)
from .metrics import (
    ConfusionMatrix,
    MacroScores,
    class_kld,
    confusion_matrix,
    macro_scores,
    mad,
    msd,
    overlap_rate,
    pearson,
    rank_transform,
    spearman,
)
from .model import (
    AggregatedMetricVector,
    Cam,
    MetricId,
    MetricMatrix,
    ModelId,
    PredictionRecord,
    validate_cam,
    validate_prediction,
)
from .report import RunConfig, default_metrics, run_extremes, run_report
from .synth import SynthSpec, synth_dataset

__version__ = "0.1.0"
