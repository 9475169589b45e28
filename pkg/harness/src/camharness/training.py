"""Sequential training of the baseline + augmentation x seed model grid.

Every model is the same convolutional classifier started from one shared
initial-weights checkpoint, so the only differences between trained models
are the training data variant and the per-state training seed. Training is
sequential and single-process with dataloader shuffling off: batch order is
exactly dataset order, which the build step fixed per augmentation.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path
from typing import Callable, Mapping

import torch
from torch.utils.data import DataLoader, Dataset
from torchvision.models import efficientnet_b0

from .data import BuildArtifacts
from .errors import TrainingError
from .spec import ExperimentSpec, derive_seed

MODEL_FAMILY = "efficientnet_b0"
INITIAL_CHECKPOINT = "initial.pt"
TRAINING_LOG = "training_log.json"

Announce = Callable[[str], None]


def build_model(class_count: int) -> torch.nn.Module:
    """A fresh, randomly initialized classifier for ``class_count`` classes."""
    return efficientnet_b0(weights=None, num_classes=class_count)


def enable_determinism() -> None:
    """Prefer deterministic kernels; nondeterministic ops warn instead of failing."""
    torch.use_deterministic_algorithms(True, warn_only=True)
    if torch.cuda.is_available():
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False


def state_digest(state_dict: Mapping[str, torch.Tensor]) -> str:
    """Order-independent sha256 of a state dict's names, shapes, and bytes."""
    digest = hashlib.sha256()
    for name in sorted(state_dict):
        tensor = state_dict[name].detach().cpu().contiguous()
        digest.update(name.encode("utf-8"))
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()


def select_best_epoch(val_accuracies: list[float]) -> int:
    """Index of the highest validation accuracy; ties go to the earliest epoch."""
    if not val_accuracies:
        raise TrainingError("no epochs were recorded")
    best = 0
    for index, accuracy in enumerate(val_accuracies):
        if accuracy > val_accuracies[best]:
            best = index
    return best


def model_grid(spec: ExperimentSpec) -> tuple[tuple[str, str | None, int | None], ...]:
    """(model_key, augmentation, state) rows, baseline first.

    The baseline row carries no augmentation; its training-state seed is the
    first entry of the spec's seed list (recorded in the training log).
    """
    rows: list[tuple[str, str | None, int | None]] = [("baseline", None, None)]
    for augmentation in spec.augmentations:
        for state in spec.seeds:
            rows.append((f"{augmentation}__s{state}", augmentation, state))
    return tuple(rows)


def evaluate_accuracy(model: torch.nn.Module, loader: DataLoader) -> float:
    model.eval()
    correct = 0
    total = 0
    with torch.no_grad():
        for images, labels in loader:
            predicted = model(images).argmax(dim=1)
            correct += int((predicted == labels).sum())
            total += int(labels.numel())
    if total == 0:
        raise TrainingError("validation set is empty")
    return correct / total


def train_one(
    model: torch.nn.Module,
    train_set: Dataset,
    val_set: Dataset,
    spec: ExperimentSpec,
    train_seed: int,
    announce: Announce = lambda line: None,
    label: str = "model",
) -> tuple[dict[str, torch.Tensor], list[dict[str, float | int]], list[str]]:
    """Train one model; returns (best-epoch state dict, history, warnings).

    The best epoch is the one with the highest validation accuracy (ties ->
    earliest). Nondeterminism warnings raised by the framework during the
    run are collected for the manifest metadata.
    """
    torch.manual_seed(train_seed)
    train_loader = DataLoader(
        train_set, batch_size=spec.batch_size, shuffle=False, num_workers=0
    )
    val_loader = DataLoader(val_set, batch_size=spec.batch_size, shuffle=False, num_workers=0)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=spec.learning_rate, weight_decay=spec.weight_decay
    )
    loss_fn = torch.nn.CrossEntropyLoss()

    history: list[dict[str, float | int]] = []
    best_state: dict[str, torch.Tensor] | None = None
    best_index = -1
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for epoch in range(spec.epochs):
            model.train()
            total_loss = 0.0
            batches = 0
            for images, labels in train_loader:
                optimizer.zero_grad()
                loss = loss_fn(model(images), labels)
                loss.backward()
                optimizer.step()
                total_loss += float(loss.detach())
                batches += 1
            if batches == 0:
                raise TrainingError("training set is empty")
            accuracy = evaluate_accuracy(model, val_loader)
            history.append(
                {
                    "epoch": epoch,
                    "train_loss": total_loss / batches,
                    "val_accuracy": accuracy,
                }
            )
            accuracies = [float(h["val_accuracy"]) for h in history]
            if select_best_epoch(accuracies) == epoch:
                best_index = epoch
                best_state = {
                    name: value.detach().clone() for name, value in model.state_dict().items()
                }
            announce(
                f"[{label}] epoch {epoch + 1}/{spec.epochs}: "
                f"train_loss={total_loss / batches:.4f} val_accuracy={accuracy:.4f}"
            )
    assert best_state is not None and best_index >= 0
    nondeterminism = sorted(
        {
            str(item.message)
            for item in caught
            if "deterministic" in str(item.message).lower()
        }
    )
    return best_state, history, nondeterminism


def train_grid(
    build: BuildArtifacts, work_dir: Path | str, announce: Announce = lambda line: None
) -> Path:
    """Train the full grid sequentially; returns the checkpoints directory.

    Writes one best-epoch checkpoint per model plus ``training_log.json``
    with per-epoch histories, the shared initial-weights digest, and any
    nondeterminism warnings.
    """
    spec = build.spec
    work_dir = Path(work_dir)
    checkpoints_dir = work_dir / "checkpoints"
    checkpoints_dir.mkdir(parents=True, exist_ok=True)

    enable_determinism()
    class_count = len(build.class_names)
    torch.manual_seed(derive_seed(spec.base_seed, "weight-init"))
    reference = build_model(class_count)
    initial_path = checkpoints_dir / INITIAL_CHECKPOINT
    torch.save(reference.state_dict(), initial_path)

    val_set = build.val_set()
    log: dict = {"model_family": MODEL_FAMILY, "class_count": class_count, "models": {}}
    for key, augmentation, state in model_grid(spec):
        if augmentation is None:
            train_set: Dataset = build.baseline_training_set()
            state = spec.seeds[0]
        else:
            train_set = build.training_set(augmentation)
        model = build_model(class_count)
        model.load_state_dict(torch.load(initial_path, weights_only=True))
        initial_digest = state_digest(model.state_dict())
        announce(f"[{key}] training on {len(train_set)} images ({spec.epochs} epoch(s))")
        best_state, history, nondeterminism = train_one(
            model,
            train_set,
            val_set,
            spec,
            train_seed=derive_seed(spec.base_seed, f"training:{state}"),
            announce=announce,
            label=key,
        )
        torch.save(best_state, checkpoints_dir / f"{key}.pt")
        accuracies = [float(h["val_accuracy"]) for h in history]
        best_epoch = select_best_epoch(accuracies)
        log["models"][key] = {
            "augmentation": augmentation,
            "training_state": state,
            "initial_digest": initial_digest,
            "history": history,
            "best_epoch": best_epoch,
            "best_val_accuracy": accuracies[best_epoch],
            "determinism_warnings": nondeterminism,
        }
    (checkpoints_dir / TRAINING_LOG).write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return checkpoints_dir
