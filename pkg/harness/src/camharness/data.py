"""Dataset acquisition, deterministic splits, and augmented-set construction.

The training corpus is CIFAR-10 when its archive is present under the data
directory; otherwise a deterministic synthetic stand-in with the identical
shape contract (32x32 RGB, 10 balanced classes, 50k/10k train/test) is
generated so every pipeline stage stays exercisable offline. Which source
was used is recorded in the build metadata and the export manifest.

Ordering guarantees, which downstream analysis depends on:

- the train/val split and any scale subset are stratified and seeded;
- each augmented training set is the base training set plus exactly one
  augmented image per source image, shuffled by a single sampling seed
  shared by every augmentation, so slot -> source-image order is identical
  across augmentations;
- augmented image content is derived from per-source-index seeds, so any
  slot fetched twice (in any epoch, any order) yields identical bytes.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from sklearn.model_selection import train_test_split
from torch.utils.data import Dataset
from torchvision.transforms import v2

from .errors import DataError, SpecError
from .spec import ExperimentSpec, derive_seed, spec_from_dict

IMAGE_SHAPE = (3, 32, 32)
CLASS_COUNT = 10
SYNTHETIC_TRAIN_COUNT = 50_000
SYNTHETIC_TEST_COUNT = 10_000
SYNTHETIC_CLASS_NAMES = tuple(f"class_{i}" for i in range(CLASS_COUNT))

BUILD_ARRAYS = "build.npz"
BUILD_META = "build.json"


# --------------------------------------------------------------------------
# augmentation operations


def cutmix_image(
    image: torch.Tensor, partner: torch.Tensor, rng: random.Random, alpha: float
) -> torch.Tensor:
    """Paste a random rectangle of ``partner`` into a copy of ``image``.

    The label stays the source image's label; only pixels move. The cut area
    follows the usual Beta(alpha, alpha) draw with at least one pixel pasted.
    """
    _, height, width = image.shape
    lam = rng.betavariate(alpha, alpha)
    cut_h = max(1, min(height, round(height * math.sqrt(1.0 - lam))))
    cut_w = max(1, min(width, round(width * math.sqrt(1.0 - lam))))
    top = rng.randrange(height - cut_h + 1)
    left = rng.randrange(width - cut_w + 1)
    out = image.clone()
    out[:, top : top + cut_h, left : left + cut_w] = partner[
        :, top : top + cut_h, left : left + cut_w
    ]
    return out


class AugmentationOp:
    """One augmentation method applied with per-call seeding.

    ``apply`` is a pure function of (image, partner, seed): the torch RNG is
    forked and seeded around the underlying transform, so repeated calls with
    the same seed return identical tensors regardless of surrounding RNG use.
    """

    def __init__(self, name: str, params: dict[str, float | int]):
        self.name = name
        self.params = dict(params)
        self._transform = _make_transform(name, self.params)

    @property
    def needs_partner(self) -> bool:
        return self.name == "cutmix"

    def apply(
        self, image: torch.Tensor, partner: torch.Tensor | None, seed: int
    ) -> torch.Tensor:
        if self.name == "cutmix":
            if partner is None:
                raise DataError("cutmix needs a partner image")
            return cutmix_image(image, partner, random.Random(seed), float(self.params["alpha"]))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return self._transform(image)


def _make_transform(name: str, params: dict[str, float | int]):
    if name == "cutmix":
        return None
    if name == "affine":
        return v2.RandomAffine(
            degrees=float(params["degrees"]),
            translate=(float(params["translate"]), float(params["translate"])),
            scale=(float(params["scale_min"]), float(params["scale_max"])),
            shear=float(params["shear"]),
        )
    if name == "color_jitter":
        return v2.ColorJitter(
            brightness=float(params["brightness"]),
            contrast=float(params["contrast"]),
            saturation=float(params["saturation"]),
            hue=float(params["hue"]),
        )
    if name == "elastic":
        return v2.ElasticTransform(alpha=float(params["alpha"]), sigma=float(params["sigma"]))
    if name == "equalize":
        return v2.RandomEqualize(p=1.0)
    if name == "gaussian_blur":
        return v2.GaussianBlur(
            kernel_size=int(params["kernel_size"]),
            sigma=(float(params["sigma_min"]), float(params["sigma_max"])),
        )
    if name == "random_crop":
        return v2.RandomCrop(size=int(params["size"]))
    raise SpecError(f"unknown augmentation {name!r}")


# --------------------------------------------------------------------------
# datasets


def make_pipeline(
    image_size: int, mean: tuple[float, float, float], std: tuple[float, float, float]
) -> v2.Compose:
    """uint8 CHW image -> resized, channel-normalized float32 tensor."""
    return v2.Compose(
        [
            v2.ToDtype(torch.float32, scale=True),
            v2.Resize((image_size, image_size), antialias=True),
            v2.Normalize(mean=list(mean), std=list(std)),
        ]
    )


class PlainImageSet(Dataset):
    """Unaugmented images (baseline training, validation, test) in fixed order."""

    def __init__(self, images: torch.Tensor, labels: np.ndarray, pipeline: v2.Compose):
        self._images = images
        self._labels = labels
        self._pipeline = pipeline

    def __len__(self) -> int:
        return len(self._images)

    def label(self, position: int) -> int:
        return int(self._labels[position])

    def raw(self, position: int) -> torch.Tensor:
        return self._images[position]

    def __getitem__(self, position: int) -> tuple[torch.Tensor, int]:
        return self._pipeline(self._images[position]), int(self._labels[position])


class AugmentedImageSet(Dataset):
    """Base training images plus one augmented image per source, pre-shuffled.

    ``permutation`` ranges over ``2 * N`` logical slots: slot values below
    ``N`` are base images, values ``N + j`` are the augmentation of source
    ``j``. The permutation and the per-source content seeds come from the
    build step, so every augmentation shares the same slot -> source order
    and every fetch of a slot is bit-reproducible.
    """

    def __init__(
        self,
        images: torch.Tensor,
        labels: np.ndarray,
        op: AugmentationOp,
        permutation: np.ndarray,
        partner_index: np.ndarray,
        content_seeds: np.ndarray,
        pipeline: v2.Compose,
    ):
        count = len(images)
        if len(permutation) != 2 * count:
            raise DataError(
                f"permutation covers {len(permutation)} slots, expected {2 * count}"
            )
        self._images = images
        self._labels = labels
        self._op = op
        self._permutation = permutation
        self._partner_index = partner_index
        self._content_seeds = content_seeds
        self._pipeline = pipeline

    def __len__(self) -> int:
        return len(self._permutation)

    @property
    def source_count(self) -> int:
        return len(self._images)

    def source_order(self) -> np.ndarray:
        """Source-image index per slot; identical across augmentations."""
        perm = self._permutation
        return np.where(perm < self.source_count, perm, perm - self.source_count)

    def is_augmented_slot(self, position: int) -> bool:
        return bool(self._permutation[position] >= self.source_count)

    def raw(self, position: int) -> torch.Tensor:
        """The slot's uint8 image before resizing/normalization."""
        slot = int(self._permutation[position])
        if slot < self.source_count:
            return self._images[slot]
        j = slot - self.source_count
        partner = self._images[int(self._partner_index[j])] if self._op.needs_partner else None
        return self._op.apply(self._images[j], partner, int(self._content_seeds[j]))

    def __getitem__(self, position: int) -> tuple[torch.Tensor, int]:
        slot = int(self._permutation[position])
        j = slot if slot < self.source_count else slot - self.source_count
        return self._pipeline(self.raw(position)), int(self._labels[j])


# --------------------------------------------------------------------------
# base data: CIFAR-10 from disk, or the synthetic stand-in


def _try_load_cifar10(data_dir: Path):
    from torchvision.datasets import CIFAR10

    try:
        train = CIFAR10(str(data_dir), train=True, download=False)
        test = CIFAR10(str(data_dir), train=False, download=False)
    except RuntimeError:
        return None
    to_chw = lambda arr: torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))
    return (
        to_chw(train.data),
        np.asarray(train.targets, dtype=np.int64),
        to_chw(test.data),
        np.asarray(test.targets, dtype=np.int64),
        tuple(train.classes),
    )


def _synthetic_labels(count: int, seed: int) -> np.ndarray:
    reps = -(-count // CLASS_COUNT)
    labels = np.tile(np.arange(CLASS_COUNT, dtype=np.int64), reps)[:count]
    return np.random.default_rng(seed).permutation(labels)


def _synthetic_templates(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(CLASS_COUNT, *IMAGE_SHAPE)).astype(np.float64)


def _synthetic_images(
    templates: np.ndarray, labels: np.ndarray, indices: np.ndarray, stream_key: int
) -> torch.Tensor:
    """Per-index generation: content depends only on (stream_key, index).

    Each image blends its class template with index-seeded noise, giving a
    learnable class signal while keeping generation lazy — only the selected
    indices are ever materialized, whatever the scale factor.
    """
    out = np.empty((len(indices), *IMAGE_SHAPE), dtype=np.uint8)
    for row, index in enumerate(indices):
        g = np.random.default_rng([stream_key, int(index)])
        noise = g.integers(0, 256, size=IMAGE_SHAPE).astype(np.float64)
        blended = 0.55 * templates[labels[index]] + 0.45 * noise
        out[row] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return torch.from_numpy(out)


def _stratified_pick(labels: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Class-stratified index subset of the given fraction, in stable order."""
    indices = np.arange(len(labels))
    if fraction >= 1.0:
        return indices
    try:
        picked, _ = train_test_split(
            indices,
            train_size=fraction,
            stratify=labels,
            random_state=seed % (2**32),
        )
    except ValueError as exc:
        raise DataError(f"cannot take a stratified {fraction:g} subset: {exc}") from exc
    return np.sort(picked)


def _stratified_split(
    labels: np.ndarray, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    indices = np.arange(len(labels))
    try:
        train_pos, val_pos = train_test_split(
            indices,
            test_size=val_fraction,
            stratify=labels,
            random_state=seed % (2**32),
        )
    except ValueError as exc:
        raise DataError(f"cannot split train/val at {val_fraction:g}: {exc}") from exc
    return train_pos, val_pos


# --------------------------------------------------------------------------
# build step: materialize splits, ordering, and stats once


@dataclass(frozen=True)
class BuildArtifacts:
    """Everything the train and export steps need, loaded from a build dir."""

    spec: ExperimentSpec
    source: str
    class_names: tuple[str, ...]
    channel_mean: tuple[float, float, float]
    channel_std: tuple[float, float, float]
    train_images: torch.Tensor
    train_labels: np.ndarray
    val_images: torch.Tensor
    val_labels: np.ndarray
    test_images: torch.Tensor
    test_labels: np.ndarray
    permutation: np.ndarray
    partner_index: np.ndarray
    content_seeds: np.ndarray

    @property
    def pipeline(self) -> v2.Compose:
        return make_pipeline(self.spec.image_size, self.channel_mean, self.channel_std)

    def baseline_training_set(self) -> PlainImageSet:
        return PlainImageSet(self.train_images, self.train_labels, self.pipeline)

    def training_set(self, augmentation: str) -> AugmentedImageSet:
        if augmentation not in self.spec.augmentations:
            raise DataError(f"augmentation {augmentation!r} is not part of this build")
        op = AugmentationOp(augmentation, self.spec.resolved_params(augmentation))
        return AugmentedImageSet(
            self.train_images,
            self.train_labels,
            op,
            self.permutation,
            self.partner_index,
            self.content_seeds,
            self.pipeline,
        )

    def val_set(self) -> PlainImageSet:
        return PlainImageSet(self.val_images, self.val_labels, self.pipeline)

    def test_set(self) -> PlainImageSet:
        return PlainImageSet(self.test_images, self.test_labels, self.pipeline)


def build_datasets(
    spec: ExperimentSpec, work_dir: Path | str, data_dir: Path | str | None = None
) -> Path:
    """Materialize splits, sampling order, and channel stats under work/build.

    Returns the build directory. Everything written here is a pure function
    of the spec (plus the CIFAR-10 archive when present), so rebuilding with
    the same spec reproduces identical arrays and ordering.
    """
    work_dir = Path(work_dir)
    data_dir = Path(data_dir) if data_dir is not None else work_dir / "data"

    real = _try_load_cifar10(data_dir)
    if real is not None:
        train_images_full, train_labels_full, test_images_full, test_labels_full, names = real
        source = "cifar10"
    else:
        label_seed = derive_seed(spec.base_seed, "synthetic-labels")
        train_labels_full = _synthetic_labels(SYNTHETIC_TRAIN_COUNT, label_seed)
        test_labels_full = _synthetic_labels(SYNTHETIC_TEST_COUNT, label_seed + 1)
        names = SYNTHETIC_CLASS_NAMES
        source = "cifar10-synthetic"

    train_pick = _stratified_pick(
        train_labels_full, spec.scale, derive_seed(spec.base_seed, "subset-train")
    )
    test_pick = _stratified_pick(
        test_labels_full, spec.scale, derive_seed(spec.base_seed, "subset-test")
    )

    if real is not None:
        subset_images = train_images_full[torch.from_numpy(train_pick)]
        test_images = test_images_full[torch.from_numpy(test_pick)]
    else:
        templates = _synthetic_templates(derive_seed(spec.base_seed, "synthetic-templates"))
        subset_images = _synthetic_images(
            templates,
            train_labels_full,
            train_pick,
            derive_seed(spec.base_seed, "synthetic-train"),
        )
        test_images = _synthetic_images(
            templates,
            test_labels_full,
            test_pick,
            derive_seed(spec.base_seed, "synthetic-test"),
        )
    subset_labels = train_labels_full[train_pick]
    test_labels = test_labels_full[test_pick]

    train_pos, val_pos = _stratified_split(
        subset_labels, spec.val_fraction, derive_seed(spec.base_seed, "train-val-split")
    )
    train_images = subset_images[torch.from_numpy(train_pos)]
    train_labels = subset_labels[train_pos]
    val_images = subset_images[torch.from_numpy(val_pos)]
    val_labels = subset_labels[val_pos]

    floats = train_images.to(torch.float64) / 255.0
    channel_mean = tuple(float(v) for v in floats.mean(dim=(0, 2, 3)))
    channel_std = tuple(max(float(v), 1e-6) for v in floats.std(dim=(0, 2, 3), unbiased=False))

    count = len(train_images)
    permutation = np.random.default_rng(
        derive_seed(spec.base_seed, "sampling-order")
    ).permutation(2 * count)
    partner_index = np.random.default_rng(
        derive_seed(spec.base_seed, "cutmix-partner")
    ).permutation(count)
    self_paired = np.flatnonzero(partner_index == np.arange(count))
    partner_index[self_paired] = (partner_index[self_paired] + 1) % count
    content_seeds = np.array(
        [derive_seed(spec.base_seed, f"augment-content:{j}") for j in range(count)],
        dtype=np.int64,
    )

    build_dir = work_dir / "build"
    build_dir.mkdir(parents=True, exist_ok=True)
    np.savez(
        build_dir / BUILD_ARRAYS,
        train_images=train_images.numpy(),
        train_labels=train_labels,
        val_images=val_images.numpy(),
        val_labels=val_labels,
        test_images=test_images.numpy(),
        test_labels=test_labels,
        permutation=permutation.astype(np.int64),
        partner_index=partner_index.astype(np.int64),
        content_seeds=content_seeds,
    )
    meta = {
        "spec": spec.to_dict(),
        "source": source,
        "class_names": list(names),
        "channel_mean": list(channel_mean),
        "channel_std": list(channel_std),
        "counts": {
            "train": int(count),
            "val": int(len(val_images)),
            "test": int(len(test_images)),
            "augmented_per_dataset": int(2 * count),
        },
        "augmentation_params": {
            aug: spec.resolved_params(aug) for aug in spec.augmentations
        },
    }
    (build_dir / BUILD_META).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return build_dir


def load_build(build_dir: Path | str) -> BuildArtifacts:
    build_dir = Path(build_dir)
    meta_path = build_dir / BUILD_META
    arrays_path = build_dir / BUILD_ARRAYS
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read build metadata {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON ({exc})") from exc
    try:
        with np.load(arrays_path) as arrays:
            loaded = {name: arrays[name] for name in arrays.files}
    except OSError as exc:
        raise DataError(f"cannot read build arrays {arrays_path}: {exc}") from exc
    try:
        spec = spec_from_dict(meta["spec"])
        return BuildArtifacts(
            spec=spec,
            source=str(meta["source"]),
            class_names=tuple(meta["class_names"]),
            channel_mean=tuple(meta["channel_mean"]),
            channel_std=tuple(meta["channel_std"]),
            train_images=torch.from_numpy(loaded["train_images"]),
            train_labels=loaded["train_labels"],
            val_images=torch.from_numpy(loaded["val_images"]),
            val_labels=loaded["val_labels"],
            test_images=torch.from_numpy(loaded["test_images"]),
            test_labels=loaded["test_labels"],
            permutation=loaded["permutation"],
            partner_index=loaded["partner_index"],
            content_seeds=loaded["content_seeds"],
        )
    except (KeyError, SpecError) as exc:
        raise DataError(f"build directory {build_dir} is incomplete or stale: {exc}") from exc
