"""Experiment specification: what to train, with which seeds, at what scale.

A spec file is a JSON or YAML mapping. Every field has a default, so the
minimal useful spec is ``{}``; a smoke-scale run looks like::

    {
      "augmentations": ["gaussian_blur", "random_crop"],
      "seeds": [1],
      "epochs": 1,
      "scale": 0.01
    }

One seed list applies to every augmentation, so the trained grid is always
complete: one baseline model plus ``len(augmentations) * len(seeds)``
augmented models, all starting from identical initial weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import SpecError

AUGMENTATION_NAMES = (
    "affine",
    "cutmix",
    "color_jitter",
    "elastic",
    "equalize",
    "gaussian_blur",
    "random_crop",
)

# Per-augmentation knobs. Values are the library defaults where the library
# has a usable default and conventional mild settings where it does not
# (ColorJitter's own defaults are all zero, i.e. a no-op). The resolved
# values are recorded in the export manifest's metadata so a consumer can
# see exactly what transformation each dataset variant applied.
DEFAULT_AUGMENTATION_PARAMS: dict[str, dict[str, float | int]] = {
    "affine": {
        "degrees": 15.0,
        "translate": 0.1,
        "scale_min": 0.9,
        "scale_max": 1.1,
        "shear": 10.0,
    },
    "cutmix": {"alpha": 1.0},
    "color_jitter": {
        "brightness": 0.4,
        "contrast": 0.4,
        "saturation": 0.4,
        "hue": 0.1,
    },
    "elastic": {"alpha": 50.0, "sigma": 5.0},
    "equalize": {},
    "gaussian_blur": {"kernel_size": 5, "sigma_min": 0.1, "sigma_max": 2.0},
    "random_crop": {"size": 24},
}

_SPEC_KEYS = (
    "dataset",
    "augmentations",
    "seeds",
    "epochs",
    "batch_size",
    "learning_rate",
    "weight_decay",
    "val_fraction",
    "scale",
    "image_size",
    "base_seed",
    "augmentation_params",
)


def derive_seed(base_seed: int, purpose: str) -> int:
    """Stable 63-bit sub-seed for one named purpose.

    Keeps the independently-seeded concerns (split, sampling order,
    augmentation content, weight init, per-model training) on unrelated
    streams while the spec exposes a single ``base_seed``.
    """
    digest = hashlib.sha256(f"{base_seed}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentSpec:
    """Complete description of one training-and-export run."""

    dataset: str = "cifar10"
    augmentations: tuple[str, ...] = AUGMENTATION_NAMES
    seeds: tuple[int, ...] = (1, 2, 3)
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    val_fraction: float = 0.1
    scale: float = 1.0
    image_size: int = 224
    base_seed: int = 100
    augmentation_params: Mapping[str, Mapping[str, float | int]] = field(
        default_factory=dict
    )

    def __post_init__(self) -> None:
        if self.dataset.lower().replace("-", "") != "cifar10":
            raise SpecError(f"unsupported dataset {self.dataset!r}; only cifar10 is available")
        object.__setattr__(self, "dataset", "cifar10")
        if not self.augmentations:
            raise SpecError("spec lists no augmentations")
        unknown = [a for a in self.augmentations if a not in AUGMENTATION_NAMES]
        if unknown:
            raise SpecError(
                f"unknown augmentation(s) {unknown}; choose from {list(AUGMENTATION_NAMES)}"
            )
        if len(set(self.augmentations)) != len(self.augmentations):
            raise SpecError("augmentation list contains duplicates")
        if not self.seeds:
            raise SpecError("spec lists no seeds")
        if any(not isinstance(s, int) or isinstance(s, bool) for s in self.seeds):
            raise SpecError("seeds must be integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise SpecError("seed list contains duplicates")
        if self.epochs < 1:
            raise SpecError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise SpecError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise SpecError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise SpecError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 < self.val_fraction < 1:
            raise SpecError(f"val_fraction must be inside (0, 1), got {self.val_fraction}")
        if not 0 < self.scale <= 1:
            raise SpecError(f"scale must be inside (0, 1], got {self.scale}")
        if self.image_size < 8:
            raise SpecError(f"image_size must be >= 8, got {self.image_size}")
        if not isinstance(self.base_seed, int) or isinstance(self.base_seed, bool):
            raise SpecError("base_seed must be an integer")
        object.__setattr__(self, "augmentation_params", _check_params(self.augmentation_params))

    def resolved_params(self, augmentation: str) -> dict[str, float | int]:
        """Defaults overlaid with this spec's overrides for one augmentation."""
        if augmentation not in AUGMENTATION_NAMES:
            raise SpecError(f"unknown augmentation {augmentation!r}")
        merged = dict(DEFAULT_AUGMENTATION_PARAMS[augmentation])
        merged.update(self.augmentation_params.get(augmentation, {}))
        return merged

    def model_keys(self) -> tuple[str, ...]:
        """Filesystem-safe names for the full grid, baseline first."""
        keys = ["baseline"]
        for augmentation in self.augmentations:
            for seed in self.seeds:
                keys.append(f"{augmentation}__s{seed}")
        return tuple(keys)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "augmentations": list(self.augmentations),
            "seeds": list(self.seeds),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "val_fraction": self.val_fraction,
            "scale": self.scale,
            "image_size": self.image_size,
            "base_seed": self.base_seed,
            "augmentation_params": {k: dict(v) for k, v in self.augmentation_params.items()},
        }


def _check_params(raw: Mapping[str, Mapping[str, float | int]]) -> dict[str, dict[str, float | int]]:
    if not isinstance(raw, Mapping):
        raise SpecError("augmentation_params must be a mapping of augmentation name to settings")
    checked: dict[str, dict[str, float | int]] = {}
    for name, settings in raw.items():
        if name not in AUGMENTATION_NAMES:
            raise SpecError(f"augmentation_params names unknown augmentation {name!r}")
        if not isinstance(settings, Mapping):
            raise SpecError(f"augmentation_params[{name!r}] must be a mapping")
        allowed = DEFAULT_AUGMENTATION_PARAMS[name]
        entry: dict[str, float | int] = {}
        for key, value in settings.items():
            if key not in allowed:
                raise SpecError(
                    f"augmentation_params[{name!r}] has unknown setting {key!r}; "
                    f"expected one of {sorted(allowed)}"
                )
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SpecError(f"augmentation_params[{name!r}][{key!r}] must be a number")
            entry[key] = value
        checked[name] = entry
    return checked


def spec_from_dict(raw: Mapping[str, Any]) -> ExperimentSpec:
    """Build a spec from a parsed mapping, rejecting unknown keys."""
    if not isinstance(raw, Mapping):
        raise SpecError("spec root must be a mapping")
    unknown = sorted(set(raw) - set(_SPEC_KEYS))
    if unknown:
        raise SpecError(f"unknown spec key(s) {unknown}; expected keys from {list(_SPEC_KEYS)}")
    kwargs: dict[str, Any] = dict(raw)
    for key in ("augmentations", "seeds"):
        if key in kwargs:
            value = kwargs[key]
            if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
                raise SpecError(f"spec key {key!r} must be a list")
            kwargs[key] = tuple(value)
    try:
        return ExperimentSpec(**kwargs)
    except TypeError as exc:
        raise SpecError(f"invalid spec: {exc}") from exc


def load_spec(path: Path | str) -> ExperimentSpec:
    """Read a JSON (.json) or YAML (.yaml/.yml) spec file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise SpecError(f"{path}: invalid YAML ({exc})") from exc
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: spec root must be a mapping, got {type(raw).__name__}")
    return spec_from_dict(raw)
