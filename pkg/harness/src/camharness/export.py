"""Export trained models as an analysis-ready dataset directory.

For every model in the grid and every test image, one activation map is
extracted (target class = the model's own prediction) and written as a
``.camf`` file; per-model softmax tables, the ground-truth table, and
``manifest.json`` complete the layout. The manifest's ``metadata`` block
records the data source, resolved augmentation parameters, channel stats,
training summaries, and any nondeterminism warnings, so an export is
self-describing.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import torch
import torchvision
from torch.utils.data import DataLoader

from .camio import (
    manifest_model_entry,
    write_cam_file,
    write_ground_truth_csv,
    write_manifest_json,
    write_predictions_csv,
)
from .data import BuildArtifacts
from .errors import ExportError
from .gradcam import GradCamExtractor
from .training import TRAINING_LOG, build_model, model_grid

Announce = Callable[[str], None]


def _image_ids(count: int) -> list[str]:
    return [f"test_{i:05d}" for i in range(count)]


def export_dataset(
    build: BuildArtifacts,
    checkpoints_dir: Path | str,
    out_dir: Path | str,
    announce: Announce = lambda line: None,
) -> Path:
    """Extract maps and predictions for the whole grid; returns the manifest path."""
    spec = build.spec
    checkpoints_dir = Path(checkpoints_dir)
    out_dir = Path(out_dir)
    log_path = checkpoints_dir / TRAINING_LOG
    try:
        training_log = json.loads(log_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExportError(
            f"cannot read training log {log_path}: {exc}; run the train step first"
        ) from exc
    except json.JSONDecodeError as exc:
        raise ExportError(f"{log_path}: invalid JSON ({exc})") from exc

    test_set = build.test_set()
    image_ids = _image_ids(len(test_set))
    class_count = len(build.class_names)
    loader = DataLoader(test_set, batch_size=spec.batch_size, shuffle=False, num_workers=0)

    (out_dir / "predictions").mkdir(parents=True, exist_ok=True)
    models = []
    for key, augmentation, state in model_grid(spec):
        checkpoint = checkpoints_dir / f"{key}.pt"
        if not checkpoint.is_file():
            raise ExportError(f"missing checkpoint {checkpoint}; run the train step first")
        model = build_model(class_count)
        model.load_state_dict(torch.load(checkpoint, weights_only=True))
        extractor = GradCamExtractor(model)

        cam_dir = out_dir / "cams" / key
        cam_dir.mkdir(parents=True, exist_ok=True)
        rows: list[tuple[str, int, list[float]]] = []
        cursor = 0
        announce(f"[{key}] extracting maps for {len(test_set)} test images")
        for images, _labels in loader:
            result = extractor.extract(images)
            for offset in range(len(result.predicted)):
                image_id = image_ids[cursor]
                write_cam_file(result.cams[offset], cam_dir / f"{image_id}.camf")
                rows.append(
                    (
                        image_id,
                        int(result.predicted[offset]),
                        [float(v) for v in result.probabilities[offset]],
                    )
                )
                cursor += 1
        if cursor != len(image_ids):
            raise ExportError(
                f"model {key!r} produced {cursor} maps for {len(image_ids)} images"
            )
        predictions_rel = f"predictions/{key}.csv"
        write_predictions_csv(rows, out_dir / predictions_rel)
        seed_label = None if state is None or augmentation is None else f"s{state}"
        models.append(
            manifest_model_entry(key, augmentation, seed_label, f"cams/{key}", predictions_rel)
        )

    truth = {image_ids[i]: test_set.label(i) for i in range(len(test_set))}
    write_ground_truth_csv(truth, out_dir / "ground_truth.csv")

    metadata = {
        "generator": "camharness",
        "source": build.source,
        "model_family": training_log.get("model_family"),
        "image_size": spec.image_size,
        "cam_resolution": "input",
        "channel_mean": list(build.channel_mean),
        "channel_std": list(build.channel_std),
        "spec": spec.to_dict(),
        "augmentation_params": {
            aug: spec.resolved_params(aug) for aug in spec.augmentations
        },
        "library_versions": {
            "torch": torch.__version__,
            "torchvision": torchvision.__version__,
        },
        "training": {
            key: {
                "initial_digest": entry.get("initial_digest"),
                "best_epoch": entry.get("best_epoch"),
                "best_val_accuracy": entry.get("best_val_accuracy"),
                "determinism_warnings": entry.get("determinism_warnings", []),
            }
            for key, entry in training_log.get("models", {}).items()
        },
    }
    manifest_path = out_dir / "manifest.json"
    write_manifest_json(
        dataset_name=build.source,
        class_names=build.class_names,
        image_ids=image_ids,
        ground_truth="ground_truth.csv",
        models=models,
        path=manifest_path,
        metadata=metadata,
    )
    return manifest_path
