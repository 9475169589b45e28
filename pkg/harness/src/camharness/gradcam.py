"""Gradient-weighted activation-map extraction via forward hooks.

The recipe: hook the target convolution layer to capture its feature maps,
run a forward pass, backpropagate the logit of the predicted class to get
per-channel gradients, weight each feature channel by its spatially averaged
gradient, sum, clamp negatives to zero, upsample to the input resolution,
and min-max normalize each map into [0, 1]. The target layer defaults to
the deepest 2-D convolution in the model, matching the convention of taking
the last convolutional layer of the backbone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import LayerLookupError


@dataclass(frozen=True)
class ExtractionResult:
    """Maps and predictions for one batch of images.

    ``cams``: (B, H, W) float64 in [0, 1] at the input resolution;
    ``probabilities``: (B, C) float64 softmax rows summing to 1;
    ``predicted``: (B,) int64, the argmax of each probability row (ties
    resolve to the lowest index, matching the downstream consumer's rule).
    """

    cams: np.ndarray
    probabilities: np.ndarray
    predicted: np.ndarray


def find_last_conv(model: torch.nn.Module) -> torch.nn.Conv2d:
    """The deepest Conv2d in module-definition order."""
    last: torch.nn.Conv2d | None = None
    for module in model.modules():
        if isinstance(module, torch.nn.Conv2d):
            last = module
    if last is None:
        raise LayerLookupError("model has no 2-D convolution layer to target")
    return last


class GradCamExtractor:
    """Extracts normalized activation maps and predictions from one model."""

    def __init__(self, model: torch.nn.Module, layer: torch.nn.Module | None = None):
        self.model = model.eval()
        self.layer = layer if layer is not None else find_last_conv(model)

    def extract(self, images: torch.Tensor) -> ExtractionResult:
        captured: dict[str, torch.Tensor] = {}

        def hook(module, args, output):
            captured["features"] = output

        handle = self.layer.register_forward_hook(hook)
        try:
            with torch.enable_grad():
                logits = self.model(images)
                features = captured.get("features")
                if features is None:
                    raise LayerLookupError("target layer did not run during the forward pass")
                if features.ndim != 4:
                    raise LayerLookupError(
                        f"target layer output has {features.ndim} dimensions, expected 4"
                    )
                probabilities = (
                    torch.softmax(logits.to(torch.float64), dim=1).detach().numpy()
                )
                predicted = np.argmax(probabilities, axis=1)
                target = torch.from_numpy(predicted).view(-1, 1)
                score = logits.gather(1, target).sum()
                gradients = torch.autograd.grad(score, features)[0]
        finally:
            handle.remove()

        weights = gradients.mean(dim=(2, 3), keepdim=True)
        cam = torch.relu((weights * features).sum(dim=1, keepdim=True))
        cam = F.interpolate(
            cam, size=images.shape[-2:], mode="bilinear", align_corners=False
        )
        cam = cam[:, 0].detach().to(torch.float64).numpy()
        low = cam.min(axis=(1, 2), keepdims=True)
        high = cam.max(axis=(1, 2), keepdims=True)
        span = high - low
        flat = span[:, 0, 0] == 0
        span[flat] = 1.0
        normalized = (cam - low) / span
        normalized[flat] = 0.0
        return ExtractionResult(
            cams=normalized, probabilities=probabilities, predicted=predicted
        )
