"""Writers for the analysis-ready dataset layout.

This is the harness's half of a file-format contract: activation maps as
little-endian binary files (magic ``CAMF``, u16 version, u32 height, u32
width, then float32 row-major values), prediction tables as CSV with header
``image_id,predicted_class,p_0..p_{C-1}``, ground truth as CSV with header
``image_id,label``, and a ``manifest.json`` tying the grid together. The
consumer ships its own validator; exports are checked against it end to end
rather than by sharing code.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ExportError

CAM_MAGIC = b"CAMF"
CAM_VERSION = 1
_CAM_HEADER = struct.Struct("<4sHII")


def write_cam_file(values: np.ndarray, path: Path | str) -> None:
    """Write one 2-D map of [0, 1] values; anything else is refused."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ExportError(f"activation map must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ExportError("activation map contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ExportError(
            f"activation map values outside [0, 1]: min={arr.min()!r} max={arr.max()!r}"
        )
    height, width = arr.shape
    header = _CAM_HEADER.pack(CAM_MAGIC, CAM_VERSION, height, width)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def read_cam_file(path: Path | str) -> np.ndarray:
    """Read one map back as (H, W) float64; used for round-trip checks."""
    raw = Path(path).read_bytes()
    if len(raw) < _CAM_HEADER.size:
        raise ExportError(f"{path}: truncated header")
    magic, version, height, width = _CAM_HEADER.unpack_from(raw)
    if magic != CAM_MAGIC or version != CAM_VERSION:
        raise ExportError(f"{path}: not a version-{CAM_VERSION} activation-map file")
    expected = _CAM_HEADER.size + 4 * height * width
    if len(raw) != expected:
        raise ExportError(f"{path}: size {len(raw)} does not match header ({expected} expected)")
    values = np.frombuffer(raw[_CAM_HEADER.size :], dtype="<f4").astype(np.float64)
    return values.reshape(height, width)


def write_predictions_csv(
    rows: Iterable[tuple[str, int, Sequence[float]]], path: Path | str
) -> None:
    """Rows are (image_id, predicted_class, probability vector)."""
    rows = list(rows)
    if not rows:
        raise ExportError("refusing to write an empty prediction table")
    class_count = len(rows[0][2])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["image_id", "predicted_class"] + [f"p_{i}" for i in range(class_count)]
        )
        for image_id, predicted, probabilities in rows:
            if len(probabilities) != class_count:
                raise ExportError(f"ragged probability row for {image_id!r}")
            writer.writerow(
                [image_id, predicted] + [repr(float(v)) for v in probabilities]
            )


def write_ground_truth_csv(truth: Mapping[str, int], path: Path | str) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "label"])
        for image_id, label in truth.items():
            writer.writerow([image_id, int(label)])


def manifest_model_entry(
    model_key: str,
    augmentation: str | None,
    seed_label: str | None,
    cam_dir: str,
    predictions: str,
) -> dict:
    """One row of the manifest's model inventory."""
    if augmentation is None:
        return {"kind": "baseline", "cam_dir": cam_dir, "predictions": predictions}
    return {
        "kind": "augmented",
        "augmentation": augmentation,
        "seed": seed_label,
        "cam_dir": cam_dir,
        "predictions": predictions,
    }


def write_manifest_json(
    dataset_name: str,
    class_names: Sequence[str],
    image_ids: Sequence[str],
    ground_truth: str,
    models: Sequence[dict],
    path: Path | str,
    metadata: Mapping | None = None,
) -> None:
    document: dict = {
        "dataset_name": dataset_name,
        "class_names": list(class_names),
        "image_ids": list(image_ids),
        "ground_truth": ground_truth,
        "models": list(models),
    }
    if metadata is not None:
        document["metadata"] = dict(metadata)
    Path(path).write_text(
        json.dumps(document, indent=2, sort_keys=False) + "\n", encoding="utf-8"
    )
