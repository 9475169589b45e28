"""Shared fixtures: synthetic datasets at several scales and one full report run."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from camscope.interchange import (
    DatasetManifest,
    ModelEntry,
    write_cam,
    write_ground_truth,
    write_manifest,
    write_predictions,
)
from camscope.model import ModelId, validate_cam, validate_prediction
from camscope.report import RunConfig, RunResult, run_report
from camscope.synth import SynthSpec, synth_dataset


def build_dataset(
    root: Path,
    class_names: list[str],
    truth: dict[str, int],
    baseline_cams: dict[str, np.ndarray],
    model_cams: dict[tuple[str, str], dict[str, np.ndarray]],
    baseline_probs: dict[str, list[float]],
    model_probs: dict[tuple[str, str], dict[str, list[float]]],
) -> Path:
    """Write a fully explicit micro dataset and return the manifest path.

    ``model_cams`` and ``model_probs`` are keyed by (augmentation, seed);
    every model must cover the same image ids as the baseline.
    """
    image_ids = list(baseline_cams)
    class_count = len(class_names)
    entries = [ModelEntry(ModelId.baseline(), "cams/baseline", "predictions/baseline.csv")]
    for augmentation, seed in model_cams:
        model = ModelId.augmented(augmentation, seed)
        entries.append(
            ModelEntry(model, f"cams/{model.key}", f"predictions/{model.key}.csv")
        )
    manifest = DatasetManifest(
        dataset_name="micro",
        class_names=tuple(class_names),
        image_ids=tuple(image_ids),
        ground_truth="ground_truth.csv",
        models=tuple(entries),
        root=root,
    )

    for entry in entries:
        cam_dir = root / entry.cam_dir
        cam_dir.mkdir(parents=True, exist_ok=True)
        if entry.model.is_baseline:
            cams, probs = baseline_cams, baseline_probs
        else:
            key = (entry.model.augmentation, entry.model.seed)
            cams, probs = model_cams[key], model_probs[key]
        for image_id in image_ids:
            write_cam(validate_cam(cams[image_id]), cam_dir / f"{image_id}.camf")
        records = [
            validate_prediction(image_id, probs[image_id], class_count)
            for image_id in image_ids
        ]
        predictions_path = root / entry.predictions
        predictions_path.parent.mkdir(parents=True, exist_ok=True)
        write_predictions(records, predictions_path)
    write_ground_truth(truth, root / "ground_truth.csv")
    manifest_path = root / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path


def one_hotish(class_count: int, winner: int, weight: float = 0.9) -> list[float]:
    """A valid probability vector peaked at ``winner``."""
    rest = (1.0 - weight) / (class_count - 1)
    return [weight if c == winner else rest for c in range(class_count)]


PLANTED_SPEC = SynthSpec(
    images=200,
    map_size=32,
    clusters=(("aug_a", "aug_b"), ("aug_c", "aug_d")),
    seeds=3,
    master_seed=42,
    class_count=10,
)


@pytest.fixture(scope="session")
def planted_manifest_path(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("planted")
    synth_dataset(PLANTED_SPEC, root)
    return root / "manifest.json"


@pytest.fixture(scope="session")
def planted_report(planted_manifest_path, tmp_path_factory) -> RunResult:
    out = tmp_path_factory.mktemp("planted_report")
    config = RunConfig(
        manifest_path=str(planted_manifest_path), out_dir=str(out), workers=1
    )
    return run_report(config)


SMALL_SPEC = SynthSpec(
    images=24,
    map_size=16,
    clusters=(("aug_a", "aug_b"), ("aug_c",)),
    seeds=2,
    master_seed=7,
    class_count=4,
)


@pytest.fixture(scope="session")
def small_manifest_path(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("small")
    synth_dataset(SMALL_SPEC, root)
    return root / "manifest.json"


IDENTITY_SPEC = SynthSpec(
    images=40,
    map_size=16,
    clusters=(("aug_a",), ("aug_b",)),
    seeds=2,
    master_seed=11,
    class_count=6,
    perturbation_blend=0.0,
)


@pytest.fixture(scope="session")
def identity_manifest_path(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("identity")
    synth_dataset(IDENTITY_SPEC, root)
    return root / "manifest.json"
