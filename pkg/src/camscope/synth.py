"""Deterministic synthetic datasets with planted cluster structure.

Augmentations are grouped into clusters. Models in the same cluster perturb
the baseline map with the same smooth per-image field and shift predictions
along the same per-image direction, distinguished only by per-seed noise, so
analysis downstream should find same-cluster augmentations behaving alike.

Every random draw comes from a generator keyed by the master seed plus the
artifact's identity (model, image, purpose), never from shared mutable state,
so output bytes do not depend on generation order or parallelism.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .interchange import (
    DatasetManifest,
    ModelEntry,
    write_cam,
    write_ground_truth,
    write_manifest,
    write_predictions,
)
from .model import Cam, ModelId, PredictionRecord, validate_cam, validate_prediction

# Prediction-shift constants: per-image magnitudes vary inside
# [_SHIFT_LOW, _SHIFT_HIGH] so divergences spread enough to correlate.
_BASE_LOGIT_SCALE = 1.5
_SHIFT_LOW = 0.5
_SHIFT_HIGH = 2.5
_PREDICTION_SEED_NOISE = 0.1
_MARGIN_LOW = 0.3
_MARGIN_HIGH = 0.7


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one synthetic dataset.

    ``clusters`` groups augmentation names; each augmentation gets
    ``seeds`` models. ``perturbation_blend`` 0 degenerates to an identity
    dataset: augmented maps and predictions are exact copies of the baseline.
    """

    images: int
    map_size: int
    clusters: tuple[tuple[str, ...], ...]
    seeds: int
    master_seed: int
    class_count: int = 10
    noise_amplitude: float = 0.05
    perturbation_blend: float = 0.4
    prediction_agreement: float = 0.8
    truth_accuracy: float = 0.8
    dataset_name: str = "synthetic"

    def __post_init__(self) -> None:
        if self.images < 2:
            raise ValidationError("synthetic dataset needs at least 2 images")
        if self.map_size < 2:
            raise ValidationError("synthetic maps need map_size >= 2")
        if self.seeds < 1:
            raise ValidationError("synthetic dataset needs at least 1 seed")
        if self.class_count < 2:
            raise ValidationError("synthetic dataset needs at least 2 classes")
        if not self.clusters or any(not cluster for cluster in self.clusters):
            raise ValidationError("clusters must be non-empty groups of augmentation names")
        names = [a for cluster in self.clusters for a in cluster]
        if len(set(names)) != len(names):
            raise ValidationError("augmentation names must be unique across clusters")
        if self.master_seed < 0:
            raise ValidationError("master seed must be non-negative")
        if not 0.0 <= self.perturbation_blend <= 1.0:
            raise ValidationError("perturbation blend must lie in [0, 1]")
        if self.noise_amplitude < 0.0:
            raise ValidationError("noise amplitude must be >= 0")
        if not 0.0 <= self.prediction_agreement <= 1.0:
            raise ValidationError("prediction agreement must lie in [0, 1]")
        if not 0.0 <= self.truth_accuracy <= 1.0:
            raise ValidationError("truth accuracy must lie in [0, 1]")

    @property
    def augmentations(self) -> tuple[str, ...]:
        return tuple(a for cluster in self.clusters for a in cluster)

    @property
    def seed_labels(self) -> tuple[str, ...]:
        return tuple(f"s{i + 1}" for i in range(self.seeds))

    def cluster_of(self, augmentation: str) -> int:
        for index, cluster in enumerate(self.clusters):
            if augmentation in cluster:
                return index
        raise ValidationError(f"unknown augmentation {augmentation!r}")


def _stream(master_seed: int, *tags: object) -> np.random.Generator:
    """Generator keyed by the master seed and a tag tuple; order-independent."""
    label = "\x1f".join(str(t) for t in tags)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, *words])))


def _bilinear_upsample(grid: np.ndarray, size: int) -> np.ndarray:
    k = grid.shape[0]
    xs = np.linspace(0.0, k - 1.0, size)
    i0 = np.floor(xs).astype(np.int64)
    i1 = np.minimum(i0 + 1, k - 1)
    frac = xs - i0
    top = (1.0 - frac)[None, :] * grid[np.ix_(i0, i0)] + frac[None, :] * grid[np.ix_(i0, i1)]
    bottom = (1.0 - frac)[None, :] * grid[np.ix_(i1, i0)] + frac[None, :] * grid[np.ix_(i1, i1)]
    return (1.0 - frac)[:, None] * top + frac[:, None] * bottom


def _normalize_unit(values: np.ndarray) -> np.ndarray:
    low = values.min()
    high = values.max()
    if high == low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def _smooth_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth pseudo-random field on [0, 1]: coarse grid, bilinear upsample."""
    coarse = max(2, size // 8)
    grid = rng.random((coarse, coarse))
    return _normalize_unit(_bilinear_upsample(grid, size))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


@dataclass(frozen=True)
class _PredictionPlan:
    """Shared per-(cluster, image) prediction perturbation."""

    direction: np.ndarray
    magnitude: float
    target_class: int
    margin: float


def _baseline_logits(spec: SynthSpec, image_id: str) -> np.ndarray:
    rng = _stream(spec.master_seed, "pred", "baseline", image_id)
    return rng.normal(0.0, _BASE_LOGIT_SCALE, spec.class_count)


def _prediction_plan(spec: SynthSpec, cluster: int, image_id: str, baseline_class: int) -> _PredictionPlan:
    rng = _stream(spec.master_seed, "pred", "cluster", cluster, image_id)
    direction = rng.normal(0.0, 1.0, spec.class_count)
    magnitude = _SHIFT_LOW + (_SHIFT_HIGH - _SHIFT_LOW) * rng.random()
    agree = rng.random() < spec.prediction_agreement
    if agree:
        target = baseline_class
    else:
        offset = int(rng.integers(1, spec.class_count))
        target = (baseline_class + offset) % spec.class_count
    margin = _MARGIN_LOW + (_MARGIN_HIGH - _MARGIN_LOW) * rng.random()
    return _PredictionPlan(direction=direction, magnitude=magnitude, target_class=target, margin=margin)


def _baseline_cam_field(spec: SynthSpec, image_id: str) -> np.ndarray:
    return _smooth_field(_stream(spec.master_seed, "cam", "baseline", image_id), spec.map_size)


def _cluster_cam_field(spec: SynthSpec, cluster: int, image_id: str) -> np.ndarray:
    return _smooth_field(_stream(spec.master_seed, "cam", "cluster", cluster, image_id), spec.map_size)


def _augmented_cam(
    spec: SynthSpec, model: ModelId, base: np.ndarray, image_id: str
) -> np.ndarray:
    cluster = spec.cluster_of(model.augmentation)
    w = spec.perturbation_blend
    field = _cluster_cam_field(spec, cluster, image_id)
    noise_rng = _stream(spec.master_seed, "cam", "noise", model.key, image_id)
    noise = noise_rng.random(base.shape) - 0.5
    blended = (1.0 - w) * base + w * field + spec.noise_amplitude * noise
    return _normalize_unit(blended)


def _augmented_prediction(
    spec: SynthSpec,
    model: ModelId,
    image_id: str,
    base_logits: np.ndarray,
    plan: _PredictionPlan,
) -> PredictionRecord:
    rng = _stream(spec.master_seed, "pred", "noise", model.key, image_id)
    logits = (
        base_logits
        + plan.magnitude * plan.direction
        + _PREDICTION_SEED_NOISE * rng.normal(0.0, 1.0, spec.class_count)
    )
    # the plan's target class wins the argmax by a strict margin
    others = np.delete(logits, plan.target_class)
    logits[plan.target_class] = others.max() + plan.margin
    probs = _softmax(logits)
    return validate_prediction(image_id, probs, spec.class_count)


def _image_ids(spec: SynthSpec) -> list[str]:
    width = max(4, len(str(spec.images - 1)))
    return [f"img_{i:0{width}d}" for i in range(spec.images)]


def synth_dataset(spec: SynthSpec, out_dir: Path | str) -> DatasetManifest:
    """Generate a complete dataset under ``out_dir`` and return its manifest.

    Rerunning with the same spec reproduces every output byte.
    """
    out = Path(out_dir)
    image_ids = _image_ids(spec)
    model_ids = [ModelId.baseline()]
    for augmentation in spec.augmentations:
        for seed in spec.seed_labels:
            model_ids.append(ModelId.augmented(augmentation, seed))

    entries = []
    for model in model_ids:
        entries.append(
            ModelEntry(
                model=model,
                cam_dir=f"cams/{model.key}",
                predictions=f"predictions/{model.key}.csv",
            )
        )
    manifest = DatasetManifest(
        dataset_name=spec.dataset_name,
        class_names=tuple(f"class_{i}" for i in range(spec.class_count)),
        image_ids=tuple(image_ids),
        ground_truth="ground_truth.csv",
        models=tuple(entries),
        root=out,
    )

    (out / "predictions").mkdir(parents=True, exist_ok=True)
    for entry in entries:
        (out / entry.cam_dir).mkdir(parents=True, exist_ok=True)

    base_fields = {image_id: _baseline_cam_field(spec, image_id) for image_id in image_ids}
    base_cams = {
        image_id: validate_cam(field, spec.map_size, spec.map_size)
        for image_id, field in base_fields.items()
    }

    base_logits = {image_id: _baseline_logits(spec, image_id) for image_id in image_ids}
    baseline_records = [
        validate_prediction(image_id, _softmax(base_logits[image_id]), spec.class_count)
        for image_id in image_ids
    ]
    baseline_by_id = {r.image_id: r for r in baseline_records}
    plans = {
        (cluster, image_id): _prediction_plan(
            spec, cluster, image_id, baseline_by_id[image_id].predicted_class
        )
        for cluster in range(len(spec.clusters))
        for image_id in image_ids
    }

    identity = spec.perturbation_blend == 0.0

    for entry in entries:
        model = entry.model
        records: list[PredictionRecord]
        if model.is_baseline:
            for image_id in image_ids:
                write_cam(base_cams[image_id], entry.cam_path(out, image_id))
            records = baseline_records
        elif identity:
            for image_id in image_ids:
                write_cam(base_cams[image_id], entry.cam_path(out, image_id))
            records = baseline_records
        else:
            cluster = spec.cluster_of(model.augmentation)
            for image_id in image_ids:
                values = _augmented_cam(spec, model, base_fields[image_id], image_id)
                write_cam(
                    validate_cam(values, spec.map_size, spec.map_size),
                    entry.cam_path(out, image_id),
                )
            records = [
                _augmented_prediction(
                    spec, model, image_id, base_logits[image_id], plans[(cluster, image_id)]
                )
                for image_id in image_ids
            ]
        write_predictions(records, out / entry.predictions)

    truth: dict[str, int] = {}
    for image_id in image_ids:
        rng = _stream(spec.master_seed, "truth", image_id)
        baseline_class = baseline_by_id[image_id].predicted_class
        if rng.random() < spec.truth_accuracy:
            truth[image_id] = baseline_class
        else:
            offset = int(rng.integers(1, spec.class_count))
            truth[image_id] = (baseline_class + offset) % spec.class_count
    write_ground_truth(truth, out / manifest.ground_truth)

    write_manifest(manifest, out / "manifest.json")
    return manifest


def spec_from_dict(raw: dict) -> SynthSpec:
    """Build a :class:`SynthSpec` from parsed JSON, e.g. a --seed-spec file."""
    if not isinstance(raw, dict):
        raise ValidationError("synthetic spec must be a JSON object")
    try:
        clusters = tuple(tuple(str(a) for a in cluster) for cluster in raw["clusters"])
        spec = SynthSpec(
            images=int(raw["images"]),
            map_size=int(raw["map_size"]),
            clusters=clusters,
            seeds=int(raw["seeds"]),
            master_seed=int(raw["master_seed"]),
            class_count=int(raw.get("class_count", 10)),
            noise_amplitude=float(raw.get("noise_amplitude", 0.05)),
            perturbation_blend=float(raw.get("perturbation_blend", 0.4)),
            prediction_agreement=float(raw.get("prediction_agreement", 0.8)),
            truth_accuracy=float(raw.get("truth_accuracy", 0.8)),
            dataset_name=str(raw.get("dataset_name", "synthetic")),
        )
    except KeyError as exc:
        raise ValidationError(f"synthetic spec is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"synthetic spec has a mistyped field: {exc}") from None
    return spec
