"""On-disk interchange: activation-map files, prediction tables, manifests.

Activation maps travel as little-endian binary files::

    offset  size  field
    0       4     magic "CAMF"
    4       2     format version (u16, currently 1)
    6       4     height (u32)
    10      4     width (u32)
    14      4*H*W float32 activations, row-major

so a valid file is always exactly 14 + 4*H*W bytes. Values are float32 on
disk and float64 in memory. Prediction tables are CSV files with a header row
``image_id,predicted_class,p_0..p_{C-1}``; ground truth is CSV with header
``image_id,label``. A dataset is tied together by ``manifest.json``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError, ManifestError, ValidationError
from .model import (
    AUGMENTED_KIND,
    BASELINE_KIND,
    Cam,
    ModelId,
    PredictionRecord,
    validate_cam,
    validate_prediction,
)

CAM_MAGIC = b"CAMF"
CAM_VERSION = 1
_CAM_HEADER = struct.Struct("<4sHII")
CAM_HEADER_SIZE = _CAM_HEADER.size  # 14 bytes

# Reject absurd header dimensions before trying to allocate the payload.
_MAX_CAM_PIXELS = 1 << 28

GroundTruthTable = dict[str, int]


def write_cam(cam: Cam, path: Path | str) -> None:
    """Serialize a map as float32; sub-float32 precision is dropped here."""
    payload = cam.values.astype("<f4").tobytes()
    header = _CAM_HEADER.pack(CAM_MAGIC, CAM_VERSION, cam.height, cam.width)
    Path(path).write_bytes(header + payload)


def read_cam_header(path: Path | str) -> tuple[int, int]:
    """Read and check a map file's header; returns (height, width)."""
    path = Path(path)
    with path.open("rb") as fh:
        header = fh.read(CAM_HEADER_SIZE)
        if len(header) < CAM_HEADER_SIZE:
            raise FormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, height, width = _CAM_HEADER.unpack(header)
        if magic != CAM_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != CAM_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if height < 1 or width < 1:
            raise FormatError(f"{path}: degenerate dimensions {height}x{width}")
        if height * width > _MAX_CAM_PIXELS:
            raise FormatError(f"{path}: dimension overflow {height}x{width}")
    expected = CAM_HEADER_SIZE + 4 * height * width
    actual = path.stat().st_size
    if actual != expected:
        raise FormatError(f"{path}: size {actual} does not match header ({expected} expected)")
    return height, width


def read_cam(path: Path | str) -> Cam:
    """Read and validate one activation-map file."""
    path = Path(path)
    height, width = read_cam_header(path)
    raw = path.read_bytes()[CAM_HEADER_SIZE:]
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    try:
        return validate_cam(values, height, width)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_predictions(records: Iterable[PredictionRecord], path: Path | str) -> None:
    records = list(records)
    if not records:
        raise FormatError("refusing to write an empty prediction table")
    class_count = records[0].probabilities.size
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "predicted_class"] + [f"p_{i}" for i in range(class_count)])
        for record in records:
            writer.writerow(
                [record.image_id, record.predicted_class]
                + [repr(float(v)) for v in record.probabilities]
            )


def read_predictions(path: Path | str, class_count: int) -> list[PredictionRecord]:
    """Parse a prediction table; every record is validated on the way in."""
    path = Path(path)
    records: list[PredictionRecord] = []
    seen: set[str] = set()
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty prediction table") from None
        expected_header = ["image_id", "predicted_class"] + [f"p_{i}" for i in range(class_count)]
        if header != expected_header:
            raise FormatError(f"{path}: unexpected header {header[:4]}...")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2 + class_count:
                raise FormatError(
                    f"{path}:{line_no}: expected {2 + class_count} columns, got {len(row)}"
                )
            image_id = row[0]
            if image_id in seen:
                raise FormatError(f"{path}:{line_no}: duplicate image id {image_id!r}")
            seen.add(image_id)
            try:
                predicted = int(row[1])
                probs = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: non-numeric field ({exc})") from None
            try:
                records.append(validate_prediction(image_id, probs, class_count, predicted))
            except ValidationError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return records


def write_ground_truth(truth: Mapping[str, int], path: Path | str) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "label"])
        for image_id, label in truth.items():
            writer.writerow([image_id, label])


def read_ground_truth(path: Path | str) -> GroundTruthTable:
    path = Path(path)
    truth: GroundTruthTable = {}
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty ground-truth table") from None
        if header != ["image_id", "label"]:
            raise FormatError(f"{path}: unexpected header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise FormatError(f"{path}:{line_no}: expected 2 columns, got {len(row)}")
            image_id, raw_label = row
            if image_id in truth:
                raise FormatError(f"{path}:{line_no}: duplicate image id {image_id!r}")
            try:
                truth[image_id] = int(raw_label)
            except ValueError:
                raise FormatError(f"{path}:{line_no}: non-integer label {raw_label!r}") from None
    return truth


@dataclass(frozen=True)
class ModelEntry:
    """Where one model's artifacts live, relative to the manifest."""

    model: ModelId
    cam_dir: str
    predictions: str

    def cam_path(self, root: Path, image_id: str) -> Path:
        return root / self.cam_dir / f"{image_id}.camf"


@dataclass(frozen=True)
class DatasetManifest:
    """Inventory of one experiment grid: baseline plus augmentation x seed models."""

    dataset_name: str
    class_names: tuple[str, ...]
    image_ids: tuple[str, ...]
    ground_truth: str
    models: tuple[ModelEntry, ...]
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.image_ids:
            raise ManifestError("manifest lists zero images")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise ManifestError("manifest lists duplicate image ids")
        if not self.class_names:
            raise ManifestError("manifest lists zero classes")
        if len(set(self.class_names)) != len(self.class_names):
            raise ManifestError("manifest lists duplicate class names")
        baselines = [e for e in self.models if e.model.is_baseline]
        if len(baselines) != 1:
            raise ManifestError(f"manifest must list exactly one baseline model, got {len(baselines)}")
        ids = [e.model for e in self.models]
        if len(set(ids)) != len(ids):
            raise ManifestError("manifest lists duplicate model ids")
        seeds_by_aug: dict[str, set[str]] = {}
        for entry in self.models:
            if not entry.model.is_baseline:
                seeds_by_aug.setdefault(entry.model.augmentation, set()).add(entry.model.seed)
        seed_sets = {frozenset(s) for s in seeds_by_aug.values()}
        if len(seed_sets) > 1:
            raise ManifestError("augmentation x seed grid is incomplete: seed sets differ")

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def baseline_entry(self) -> ModelEntry:
        return next(e for e in self.models if e.model.is_baseline)

    @property
    def augmented_entries(self) -> tuple[ModelEntry, ...]:
        return tuple(e for e in self.models if not e.model.is_baseline)

    @property
    def augmentations(self) -> tuple[str, ...]:
        """Augmentation names in first-appearance order."""
        seen: list[str] = []
        for entry in self.augmented_entries:
            if entry.model.augmentation not in seen:
                seen.append(entry.model.augmentation)
        return tuple(seen)

    @property
    def seed_labels(self) -> tuple[str, ...]:
        """Seed labels shared by every augmentation, sorted."""
        labels = {e.model.seed for e in self.augmented_entries}
        return tuple(sorted(labels))

    def entry_for(self, model: ModelId) -> ModelEntry:
        for entry in self.models:
            if entry.model == model:
                return entry
        raise ManifestError(f"manifest has no model {model.key!r}")


def _model_entry_from_dict(raw: dict, index: int) -> ModelEntry:
    if not isinstance(raw, dict):
        raise ManifestError(f"models[{index}] is not an object")
    kind = raw.get("kind")
    for key in ("cam_dir", "predictions"):
        if not isinstance(raw.get(key), str) or not raw.get(key):
            raise ManifestError(f"models[{index}] is missing {key!r}")
    try:
        if kind == BASELINE_KIND:
            model = ModelId.baseline()
        elif kind == AUGMENTED_KIND:
            model = ModelId.augmented(raw.get("augmentation"), raw.get("seed"))
        else:
            raise ManifestError(f"models[{index}] has unknown kind {kind!r}")
    except ValidationError as exc:
        raise ManifestError(f"models[{index}]: {exc}") from exc
    return ModelEntry(model=model, cam_dir=raw["cam_dir"], predictions=raw["predictions"])


def manifest_from_dict(raw: dict, root: Path | None = None) -> DatasetManifest:
    if not isinstance(raw, dict):
        raise ManifestError("manifest root is not an object")
    for key, kind in (
        ("dataset_name", str),
        ("class_names", list),
        ("image_ids", list),
        ("ground_truth", str),
        ("models", list),
    ):
        if not isinstance(raw.get(key), kind):
            raise ManifestError(f"manifest is missing or mistypes {key!r}")
    models = tuple(_model_entry_from_dict(m, i) for i, m in enumerate(raw["models"]))
    return DatasetManifest(
        dataset_name=raw["dataset_name"],
        class_names=tuple(str(c) for c in raw["class_names"]),
        image_ids=tuple(str(i) for i in raw["image_ids"]),
        ground_truth=raw["ground_truth"],
        models=models,
        root=root,
    )


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    models = []
    for entry in manifest.models:
        item: dict = {"kind": entry.model.kind}
        if not entry.model.is_baseline:
            item["augmentation"] = entry.model.augmentation
            item["seed"] = entry.model.seed
        item["cam_dir"] = entry.cam_dir
        item["predictions"] = entry.predictions
        models.append(item)
    return {
        "dataset_name": manifest.dataset_name,
        "class_names": list(manifest.class_names),
        "image_ids": list(manifest.image_ids),
        "ground_truth": manifest.ground_truth,
        "models": models,
    }


def read_manifest(path: Path | str) -> DatasetManifest:
    """Parse and structurally check ``manifest.json``; paths stay relative."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(raw, root=path.parent)


def write_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    text = json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Issue:
    """One content problem found while validating a dataset."""

    category: str
    message: str

    def __str__(self) -> str:
        return f"[{self.category}] {self.message}"


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_dataset`; empty means the dataset is usable."""

    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, category: str, message: str) -> None:
        self.issues.append(Issue(category, message))

    def __str__(self) -> str:
        if self.ok:
            return "dataset is valid"
        return "\n".join(str(issue) for issue in self.issues)


def validate_dataset(manifest: DatasetManifest, root: Path | str | None = None) -> ValidationReport:
    """Cross-check every artifact the manifest references.

    Content problems (missing files, dimension disagreements, coverage gaps)
    are collected in the report; only genuine I/O failures raise.
    """
    if root is None:
        root = manifest.root
    if root is None:
        raise ManifestError("dataset root unknown: pass root or read the manifest from disk")
    root = Path(root)
    report = ValidationReport()
    expected_ids = set(manifest.image_ids)

    # one CAM per (model, image), with consistent dimensions per image
    dims_by_image: dict[str, tuple[tuple[int, int], str]] = {}
    for entry in manifest.models:
        for image_id in manifest.image_ids:
            path = entry.cam_path(root, image_id)
            if not path.is_file():
                report.add("missing_cam", f"model {entry.model.key!r} has no map for {image_id!r}")
                continue
            try:
                dims = read_cam_header(path)
            except FormatError as exc:
                report.add("cam_format", str(exc))
                continue
            if image_id not in dims_by_image:
                dims_by_image[image_id] = (dims, entry.model.key)
            else:
                first_dims, first_model = dims_by_image[image_id]
                if dims != first_dims:
                    report.add(
                        "cam_dimension_disagreement",
                        f"image {image_id!r}: model {entry.model.key!r} is "
                        f"{dims[0]}x{dims[1]} but {first_model!r} is "
                        f"{first_dims[0]}x{first_dims[1]}",
                    )

    # one prediction row per (model, image)
    for entry in manifest.models:
        path = root / entry.predictions
        if not path.is_file():
            report.add("prediction_coverage", f"model {entry.model.key!r}: no prediction table")
            continue
        try:
            records = read_predictions(path, manifest.class_count)
        except FormatError as exc:
            report.add("prediction_invalid", str(exc))
            continue
        got = {r.image_id for r in records}
        for image_id in manifest.image_ids:
            if image_id not in got:
                report.add(
                    "prediction_coverage",
                    f"model {entry.model.key!r}: no prediction for {image_id!r}",
                )
        for image_id in sorted(got - expected_ids):
            report.add(
                "prediction_coverage",
                f"model {entry.model.key!r}: prediction for unknown image {image_id!r}",
            )

    # ground truth covers the image set with in-range labels
    gt_path = root / manifest.ground_truth
    if not gt_path.is_file():
        report.add("ground_truth_coverage", "ground-truth table missing")
    else:
        try:
            truth = read_ground_truth(gt_path)
        except FormatError as exc:
            report.add("ground_truth_coverage", str(exc))
        else:
            for image_id in manifest.image_ids:
                if image_id not in truth:
                    report.add("ground_truth_coverage", f"no label for image {image_id!r}")
            for image_id in sorted(set(truth) - expected_ids):
                report.add("ground_truth_coverage", f"label for unknown image {image_id!r}")
            for image_id, label in truth.items():
                if not 0 <= label < manifest.class_count:
                    report.add(
                        "ground_truth_range",
                        f"label {label} for image {image_id!r} outside 0..{manifest.class_count - 1}",
                    )
    return report


class Dataset:
    """Random-access view over a manifest's artifacts with light caching.

    Baseline maps and all prediction tables are cached; augmented maps are
    read on demand since each is touched once per metric pass.
    """

    def __init__(self, manifest: DatasetManifest, root: Path | str | None = None):
        if root is None:
            root = manifest.root
        if root is None:
            raise ManifestError("dataset root unknown: pass root or read the manifest from disk")
        self.manifest = manifest
        self.root = Path(root)
        self._baseline_cams: dict[str, Cam] = {}
        self._predictions: dict[str, dict[str, PredictionRecord]] = {}
        self._ground_truth: GroundTruthTable | None = None

    @classmethod
    def open(cls, manifest_path: Path | str) -> "Dataset":
        return cls(read_manifest(manifest_path))

    @property
    def image_ids(self) -> tuple[str, ...]:
        return self.manifest.image_ids

    @property
    def class_count(self) -> int:
        return self.manifest.class_count

    def cam(self, model: ModelId, image_id: str) -> Cam:
        entry = self.manifest.entry_for(model)
        if model.is_baseline and image_id in self._baseline_cams:
            return self._baseline_cams[image_id]
        cam = read_cam(entry.cam_path(self.root, image_id))
        if model.is_baseline:
            self._baseline_cams[image_id] = cam
        return cam

    def predictions(self, model: ModelId) -> dict[str, PredictionRecord]:
        entry = self.manifest.entry_for(model)
        if entry.model.key not in self._predictions:
            records = read_predictions(self.root / entry.predictions, self.class_count)
            self._predictions[entry.model.key] = {r.image_id: r for r in records}
        return self._predictions[entry.model.key]

    def ground_truth(self) -> GroundTruthTable:
        if self._ground_truth is None:
            self._ground_truth = read_ground_truth(self.root / self.manifest.ground_truth)
        return self._ground_truth
