"""Training mechanics: best-epoch selection, digests, reproducibility."""

import random

import numpy as np
import pytest
import torch

from camharness import (
    ExperimentSpec,
    TrainingError,
    enable_determinism,
    model_grid,
    select_best_epoch,
    state_digest,
    train_one,
)
from camharness.data import PlainImageSet, make_pipeline
from camharness.training import evaluate_accuracy
from conftest import TinyNet


class TestSelectBestEpoch:
    def test_ties_resolve_to_the_earliest_epoch(self):
        assert select_best_epoch([0.1, 0.5, 0.5, 0.3]) == 1

    def test_single_epoch(self):
        assert select_best_epoch([0.25]) == 0

    def test_monotone_improvement_picks_the_last(self):
        assert select_best_epoch([0.1, 0.2, 0.3]) == 2

    def test_empty_history_is_an_error(self):
        with pytest.raises(TrainingError, match="no epochs"):
            select_best_epoch([])

    def test_matches_a_naive_scan_oracle(self):
        rng = random.Random(20260816)
        for _ in range(200):
            accuracies = [rng.choice((0.2, 0.4, 0.6, 0.8)) for _ in range(rng.randint(1, 12))]
            best = 0
            for index in range(len(accuracies)):
                if accuracies[index] > accuracies[best]:
                    best = index
            assert select_best_epoch(accuracies) == best


class TestStateDigest:
    def test_equal_states_share_a_digest(self):
        torch.manual_seed(0)
        model = TinyNet(4)
        first = state_digest(model.state_dict())
        reloaded = TinyNet(4)
        reloaded.load_state_dict(model.state_dict())
        assert state_digest(reloaded.state_dict()) == first

    def test_any_weight_change_alters_the_digest(self):
        torch.manual_seed(1)
        model = TinyNet(4)
        before = state_digest(model.state_dict())
        with torch.no_grad():
            model.head.bias[0] += 1.0
        assert state_digest(model.state_dict()) != before

    def test_insertion_order_is_irrelevant(self):
        torch.manual_seed(2)
        state = TinyNet(3).state_dict()
        reversed_state = dict(reversed(list(state.items())))
        assert state_digest(state) == state_digest(reversed_state)


class TestModelGrid:
    def test_baseline_first_then_augmentation_by_seed(self):
        spec = ExperimentSpec(augmentations=("equalize", "affine"), seeds=(3, 1))
        assert model_grid(spec) == (
            ("baseline", None, None),
            ("equalize__s3", "equalize", 3),
            ("equalize__s1", "equalize", 1),
            ("affine__s3", "affine", 3),
            ("affine__s1", "affine", 1),
        )


def _toy_sets(train_count=48, val_count=16, classes=4, size=16, seed=0):
    rng = np.random.default_rng(seed)
    pipeline = make_pipeline(size, (0.5, 0.5, 0.5), (0.25, 0.25, 0.25))
    make = lambda n: (
        torch.from_numpy(rng.integers(0, 256, (n, 3, size, size)).astype(np.uint8)),
        rng.integers(0, classes, n).astype(np.int64),
    )
    train_images, train_labels = make(train_count)
    val_images, val_labels = make(val_count)
    return (
        PlainImageSet(train_images, train_labels, pipeline),
        PlainImageSet(val_images, val_labels, pipeline),
    )


TOY_SPEC = ExperimentSpec(
    augmentations=("equalize",), seeds=(1,), epochs=3, scale=0.01, image_size=16, batch_size=16
)


class TestTrainOne:
    def test_history_and_best_checkpoint_agree(self):
        enable_determinism()
        train_set, val_set = _toy_sets()
        torch.manual_seed(7)
        model = TinyNet(4)
        best_state, history, warnings_seen = train_one(
            model, train_set, val_set, TOY_SPEC, train_seed=99
        )
        assert len(history) == TOY_SPEC.epochs
        accuracies = [h["val_accuracy"] for h in history]
        best_epoch = select_best_epoch(accuracies)
        restored = TinyNet(4)
        restored.load_state_dict(best_state)
        loader = torch.utils.data.DataLoader(val_set, batch_size=16, shuffle=False)
        assert evaluate_accuracy(restored, loader) == pytest.approx(accuracies[best_epoch])
        assert isinstance(warnings_seen, list)

    def test_same_seed_same_start_reproduces_weights(self):
        enable_determinism()
        train_set, val_set = _toy_sets(seed=3)
        torch.manual_seed(11)
        reference = TinyNet(4)
        initial = {k: v.clone() for k, v in reference.state_dict().items()}

        digests = []
        for _ in range(2):
            model = TinyNet(4)
            model.load_state_dict(initial)
            best_state, _, _ = train_one(model, train_set, val_set, TOY_SPEC, train_seed=5)
            digests.append(state_digest(best_state))
        assert digests[0] == digests[1]

    def test_different_training_seed_changes_nothing_without_dropout(self):
        # TinyNet has no stochastic layers, so the training seed must not
        # perturb results; this pins down that all randomness is owned by
        # explicitly seeded components.
        enable_determinism()
        train_set, val_set = _toy_sets(seed=4)
        torch.manual_seed(13)
        reference = TinyNet(4)
        initial = {k: v.clone() for k, v in reference.state_dict().items()}
        digests = []
        for train_seed in (1, 2):
            model = TinyNet(4)
            model.load_state_dict(initial)
            best_state, _, _ = train_one(model, train_set, val_set, TOY_SPEC, train_seed=train_seed)
            digests.append(state_digest(best_state))
        assert digests[0] == digests[1]


class TestEvaluateAccuracy:
    def test_exact_fraction(self):
        class AlwaysZero(torch.nn.Module):
            def forward(self, x):
                logits = torch.zeros((x.shape[0], 4))
                logits[:, 0] = 1.0
                return logits

        _, val_set = _toy_sets(val_count=20, seed=6)
        loader = torch.utils.data.DataLoader(val_set, batch_size=8, shuffle=False)
        expected = sum(val_set.label(i) == 0 for i in range(20)) / 20
        assert evaluate_accuracy(AlwaysZero(), loader) == pytest.approx(expected)
