"""Seeded CNN training grid with gradient-based activation-map export.

Builds controlled augmented datasets, trains a baseline plus one model per
(augmentation, seed) from shared initial weights, extracts per-image
activation maps, and writes an analysis-ready dataset directory.
"""

from .data import (
    AugmentationOp,
    AugmentedImageSet,
    BuildArtifacts,
    PlainImageSet,
    build_datasets,
    cutmix_image,
    load_build,
    make_pipeline,
)
from .errors import (
    DataError,
    ExportError,
    HarnessError,
    LayerLookupError,
    SpecError,
    TrainingError,
)
from .export import export_dataset
from .gradcam import ExtractionResult, GradCamExtractor, find_last_conv
from .spec import (
    AUGMENTATION_NAMES,
    DEFAULT_AUGMENTATION_PARAMS,
    ExperimentSpec,
    derive_seed,
    load_spec,
    spec_from_dict,
)
from .training import (
    build_model,
    enable_determinism,
    model_grid,
    select_best_epoch,
    state_digest,
    train_grid,
    train_one,
)

__version__ = "0.1.0"

__all__ = [
    "AUGMENTATION_NAMES",
    "AugmentationOp",
    "AugmentedImageSet",
    "BuildArtifacts",
    "DEFAULT_AUGMENTATION_PARAMS",
    "DataError",
    "ExperimentSpec",
    "ExportError",
    "ExtractionResult",
    "GradCamExtractor",
    "HarnessError",
    "LayerLookupError",
    "PlainImageSet",
    "SpecError",
    "TrainingError",
    "build_datasets",
    "build_model",
    "cutmix_image",
    "derive_seed",
    "enable_determinism",
    "export_dataset",
    "find_last_conv",
    "load_build",
    "load_spec",
    "make_pipeline",
    "model_grid",
    "select_best_epoch",
    "spec_from_dict",
    "state_digest",
    "train_grid",
    "train_one",
]
