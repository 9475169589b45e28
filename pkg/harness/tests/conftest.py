"""Shared fixtures: a tiny stand-in classifier and a micro pipeline run.

The micro pipeline swaps the full-size classifier for a small CNN during
fixture setup only (the patch is undone before any test body runs), so
wiring-level facts about build/train/export artifacts can be asserted in
seconds. The acceptance test trains the real classifier and does not use
these fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pytest
import torch
from pytest import MonkeyPatch

import camharness.export as export_module
import camharness.training as training_module
from camharness import ExperimentSpec, build_datasets, export_dataset, load_build, train_grid


class TinyNet(torch.nn.Module):
    """Small conv classifier with the same structural contract as the real one."""

    def __init__(self, class_count: int):
        super().__init__()
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(3, 8, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.MaxPool2d(4),
            torch.nn.Conv2d(8, 16, 3, padding=1),
            torch.nn.ReLU(),
        )
        self.pool = torch.nn.AdaptiveAvgPool2d(1)
        self.head = torch.nn.Linear(16, class_count)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.pool(self.features(x)).flatten(1))


def tiny_build_model(class_count: int) -> torch.nn.Module:
    return TinyNet(class_count)


MICRO_SPEC = ExperimentSpec(
    augmentations=("cutmix", "equalize"),
    seeds=(1,),
    epochs=2,
    scale=0.01,
    image_size=32,
)


@dataclass(frozen=True)
class MicroRun:
    spec: ExperimentSpec
    work: Path
    build_dir: Path
    checkpoints_dir: Path
    export_dir: Path
    manifest_path: Path

    @property
    def training_log(self) -> dict:
        return json.loads((self.checkpoints_dir / "training_log.json").read_text())

    @property
    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text())


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory) -> MicroRun:
    work = tmp_path_factory.mktemp("micro")
    with MonkeyPatch.context() as patch:
        patch.setattr(training_module, "build_model", tiny_build_model)
        patch.setattr(export_module, "build_model", tiny_build_model)
        build_dir = build_datasets(MICRO_SPEC, work)
        build = load_build(build_dir)
        checkpoints_dir = train_grid(build, work)
        manifest_path = export_dataset(build, checkpoints_dir, work / "export")
    return MicroRun(
        spec=MICRO_SPEC,
        work=work,
        build_dir=build_dir,
        checkpoints_dir=checkpoints_dir,
        export_dir=work / "export",
        manifest_path=manifest_path,
    )
