"""Core domain types: activation maps, model identities, predictions, metric records.

Activation values are stored as float64 internally regardless of how they were
serialized; the interchange layer owns the 32-bit on-disk representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ValidationError

# Ingestion slack for values that drifted out of [0, 1] during serialization.
# Anything farther out than this is a real defect, not round-off.
RANGE_TOLERANCE = 1e-6

# Probability vectors must sum to 1 within this tolerance.
PROBABILITY_SUM_TOLERANCE = 1e-5

BASELINE_KIND = "baseline"
AUGMENTED_KIND = "augmented"

METRIC_NAMES = ("mad", "msd", "pearson", "spearman", "overlap_rate", "class_kld")

# Metrics that compare class-probability vectors rather than activation maps.
PREDICTION_METRIC_NAMES = ("class_kld",)

DEFAULT_KLD_EPSILON = 1e-10


@dataclass(frozen=True)
class Cam:
    """A single class activation map, flattened row-major.

    ``values`` is a read-only float64 array of length ``height * width`` with
    every entry inside [0, 1]. Construct through :func:`validate_cam`.
    """

    height: int
    width: int
    values: np.ndarray = field(compare=False)

    @property
    def size(self) -> int:
        return self.height * self.width

    def grid(self) -> np.ndarray:
        """Return the map as a read-only (height, width) view."""
        return self.values.reshape(self.height, self.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cam):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and np.array_equal(self.values, other.values)
        )


def validate_cam(values, height: int | None = None, width: int | None = None) -> Cam:
    """Validate raw activation data and return an immutable :class:`Cam`.

    Accepts a 2-D array (dimensions inferred) or a flat row-major sequence with
    explicit ``height`` and ``width``. Values within ``RANGE_TOLERANCE`` of
    [0, 1] are clamped onto the boundary; values farther out are rejected.
    Idempotent: validating an already-valid map changes no bits.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        if height is None:
            height = arr.shape[0]
        if width is None:
            width = arr.shape[1]
        arr = arr.ravel()
    elif arr.ndim == 1:
        if height is None or width is None:
            raise ValidationError("flat activation data needs explicit height and width")
    else:
        raise ValidationError(f"activation data must be 1-D or 2-D, got {arr.ndim}-D")

    if height < 1 or width < 1:
        raise ValidationError(f"map dimensions must be positive, got {height}x{width}")
    if arr.size != height * width:
        raise ValidationError(
            f"dimension mismatch: {height}x{width} needs {height * width} values, got {arr.size}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError("activation map contains non-finite values")

    low = float(arr.min())
    high = float(arr.max())
    if low < -RANGE_TOLERANCE or high > 1.0 + RANGE_TOLERANCE:
        raise ValidationError(
            f"activation values outside [0, 1] beyond tolerance: min={low!r} max={high!r}"
        )
    arr = arr.copy()
    np.clip(arr, 0.0, 1.0, out=arr)
    arr.setflags(write=False)
    return Cam(height=int(height), width=int(width), values=arr)


@dataclass(frozen=True, order=True)
class ModelId:
    """Identity of a trained model within one experiment grid."""

    kind: str
    augmentation: str | None = None
    seed: str | None = None

    def __post_init__(self) -> None:
        if self.kind == BASELINE_KIND:
            if self.augmentation is not None or self.seed is not None:
                raise ValidationError("baseline model must not carry augmentation or seed")
        elif self.kind == AUGMENTED_KIND:
            if not self.augmentation or not self.seed:
                raise ValidationError("augmented model needs both augmentation and seed")
        else:
            raise ValidationError(f"unknown model kind: {self.kind!r}")

    @classmethod
    def baseline(cls) -> "ModelId":
        return cls(kind=BASELINE_KIND)

    @classmethod
    def augmented(cls, augmentation: str, seed: str) -> "ModelId":
        return cls(kind=AUGMENTED_KIND, augmentation=augmentation, seed=seed)

    @property
    def is_baseline(self) -> bool:
        return self.kind == BASELINE_KIND

    @property
    def key(self) -> str:
        """Filesystem-safe unique name, e.g. ``baseline`` or ``affine__s1``."""
        if self.is_baseline:
            return BASELINE_KIND
        return f"{self.augmentation}__{self.seed}"


@dataclass(frozen=True)
class PredictionRecord:
    """One model's class-probability vector for one image."""

    image_id: str
    probabilities: np.ndarray = field(compare=False)
    predicted_class: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PredictionRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.predicted_class == other.predicted_class
            and np.array_equal(self.probabilities, other.probabilities)
        )


def validate_prediction(
    image_id: str,
    probabilities,
    class_count: int,
    predicted_class: int | None = None,
) -> PredictionRecord:
    """Validate a probability vector and return a :class:`PredictionRecord`.

    The vector is never altered: probabilities are stored exactly as given.
    ``predicted_class`` defaults to the argmax (ties resolve to the lowest
    index) and, when supplied, must agree with it.
    """
    if not image_id:
        raise ValidationError("prediction record needs a non-empty image id")
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 1 or probs.size != class_count:
        raise ValidationError(
            f"probability vector for {image_id!r} has length {probs.size}, expected {class_count}"
        )
    if not np.all(np.isfinite(probs)):
        raise ValidationError(f"non-finite probability for {image_id!r}")
    if np.any(probs < 0.0):
        raise ValidationError(f"negative probability for {image_id!r}")
    total = float(probs.sum())
    if abs(total - 1.0) > PROBABILITY_SUM_TOLERANCE:
        raise ValidationError(
            f"probabilities for {image_id!r} sum to {total!r}, outside 1 +/- {PROBABILITY_SUM_TOLERANCE}"
        )
    argmax = int(np.argmax(probs))
    if predicted_class is None:
        predicted_class = argmax
    elif predicted_class != argmax:
        raise ValidationError(
            f"predicted class {predicted_class} for {image_id!r} is not the argmax ({argmax})"
        )
    probs = probs.copy()
    probs.setflags(write=False)
    return PredictionRecord(image_id=image_id, probabilities=probs, predicted_class=predicted_class)


def _format_parameter(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class MetricId:
    """A metric name plus its parameter, e.g. ``overlap_rate@20``.

    ``overlap_rate`` requires a percentile in (0, 100); ``class_kld`` requires
    a regularizer epsilon >= 0. The remaining metrics take no parameter.
    """

    name: str
    parameter: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("metric name must be non-empty")
        if self.name == "overlap_rate":
            if self.parameter is None or not 0.0 < self.parameter < 100.0:
                raise ValidationError("overlap_rate needs a percentile strictly inside (0, 100)")
        elif self.name == "class_kld":
            if self.parameter is None or self.parameter < 0.0:
                raise ValidationError("class_kld needs an epsilon >= 0")
        elif self.parameter is not None:
            raise ValidationError(f"metric {self.name!r} takes no parameter")

    @classmethod
    def parse(cls, token: str, kld_epsilon: float = DEFAULT_KLD_EPSILON) -> "MetricId":
        """Parse a ``name`` or ``name@parameter`` token.

        Only the shipped metric names are accepted here; programmatically
        registered metrics construct their ids directly. A bare ``class_kld``
        gets ``kld_epsilon``; other parametric metrics must spell their
        parameter out.
        """
        token = token.strip()
        if "@" in token:
            name, _, raw = token.partition("@")
            try:
                parameter: float | None = float(raw)
            except ValueError:
                raise ValidationError(f"bad metric parameter in {token!r}") from None
        else:
            name = token
            parameter = kld_epsilon if token == "class_kld" else None
        if name not in METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")
        return cls(name=name, parameter=parameter)

    @property
    def key(self) -> str:
        """Canonical token, e.g. ``mad`` or ``class_kld@1e-10``."""
        if self.parameter is None:
            return self.name
        return f"{self.name}@{_format_parameter(self.parameter)}"

    @property
    def file_key(self) -> str:
        """Filesystem-safe variant of :attr:`key`."""
        return self.key.replace("@", "_")

    @property
    def compares_predictions(self) -> bool:
        return self.name in PREDICTION_METRIC_NAMES

    def __str__(self) -> str:
        return self.key


def _check_entry_maps(entries: Mapping[str, float], undefined: Mapping[str, str]) -> None:
    overlap = entries.keys() & undefined.keys()
    if overlap:
        raise ValidationError(f"image ids both defined and undefined: {sorted(overlap)[:3]}")


@dataclass(frozen=True)
class MetricMatrix:
    """Per-image values of one metric for one augmented model vs the baseline.

    ``entries`` holds defined values in manifest image order; ``undefined``
    maps the remaining image ids to a reason code. Together they cover the
    test set exactly once.
    """

    metric: MetricId
    model: ModelId
    entries: Mapping[str, float]
    undefined: Mapping[str, str]

    def __post_init__(self) -> None:
        if self.model.is_baseline:
            raise ValidationError("metric matrices belong to augmented models")
        _check_entry_maps(self.entries, self.undefined)

    @property
    def image_count(self) -> int:
        return len(self.entries) + len(self.undefined)


@dataclass(frozen=True)
class AggregatedMetricVector:
    """Seed-mean of one metric for one augmentation.

    An image is defined iff at least one seed produced a defined value;
    ``contributing`` records how many seeds entered each image's mean.
    """

    metric: MetricId
    augmentation: str
    entries: Mapping[str, float]
    undefined: Mapping[str, str]
    contributing: Mapping[str, int]
    seed_count: int

    def __post_init__(self) -> None:
        _check_entry_maps(self.entries, self.undefined)
        for image_id, count in self.contributing.items():
            if image_id in self.entries:
                if not 1 <= count <= self.seed_count:
                    raise ValidationError(
                        f"contributing count {count} for {image_id!r} outside 1..{self.seed_count}"
                    )
            elif count != 0:
                raise ValidationError(f"undefined image {image_id!r} has contributing count {count}")

    @property
    def image_count(self) -> int:
        return len(self.entries) + len(self.undefined)
