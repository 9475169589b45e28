"""Synthetic dataset generator: determinism, identity mode, spec validation."""

from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from camscope.errors import ValidationError
from camscope.interchange import read_manifest, validate_dataset
from camscope.synth import SynthSpec, spec_from_dict, synth_dataset

from conftest import SMALL_SPEC


def tree_digest(root: Path) -> dict[str, str]:
    """Relative path -> content hash for every file under ``root``."""
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestDeterminism:
    def test_same_spec_twice_is_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_dataset(SMALL_SPEC, a)
        synth_dataset(SMALL_SPEC, b)
        assert tree_digest(a) == tree_digest(b)

    def test_master_seed_changes_output(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_dataset(SMALL_SPEC, a)
        changed = SynthSpec(
            images=SMALL_SPEC.images,
            map_size=SMALL_SPEC.map_size,
            clusters=SMALL_SPEC.clusters,
            seeds=SMALL_SPEC.seeds,
            master_seed=SMALL_SPEC.master_seed + 1,
            class_count=SMALL_SPEC.class_count,
        )
        synth_dataset(changed, b)
        assert tree_digest(a) != tree_digest(b)


class TestOutputs:
    def test_generated_dataset_validates_cleanly(self, small_manifest_path):
        manifest = read_manifest(small_manifest_path)
        assert validate_dataset(manifest).ok

    def test_model_grid_matches_spec(self, small_manifest_path):
        manifest = read_manifest(small_manifest_path)
        assert manifest.augmentations == SMALL_SPEC.augmentations
        assert manifest.seed_labels == SMALL_SPEC.seed_labels
        expected = 1 + len(SMALL_SPEC.augmentations) * SMALL_SPEC.seeds
        assert len(manifest.models) == expected
        assert len(manifest.image_ids) == SMALL_SPEC.images

    def test_identity_mode_copies_baseline_bytes(self, identity_manifest_path):
        root = identity_manifest_path.parent
        manifest = read_manifest(identity_manifest_path)
        baseline = manifest.baseline_entry
        for entry in manifest.augmented_entries:
            for image_id in manifest.image_ids:
                augmented = entry.cam_path(root, image_id).read_bytes()
                original = baseline.cam_path(root, image_id).read_bytes()
                assert augmented == original
            augmented_table = (root / entry.predictions).read_text().splitlines()[1:]
            baseline_table = (root / baseline.predictions).read_text().splitlines()[1:]
            assert augmented_table == baseline_table


class TestSpecValidation:
    def test_rejects_bad_parameters(self):
        good = dict(
            images=10, map_size=8, clusters=(("a",),), seeds=1, master_seed=0, class_count=3
        )
        SynthSpec(**good)  # sanity: the base case is fine
        for override in (
            {"images": 1},
            {"map_size": 1},
            {"seeds": 0},
            {"class_count": 1},
            {"clusters": ()},
            {"clusters": (("a",), ())},
            {"clusters": (("a",), ("a",))},
            {"master_seed": -1},
            {"perturbation_blend": 1.5},
            {"noise_amplitude": -0.1},
        ):
            with pytest.raises(ValidationError):
                SynthSpec(**{**good, **override})

    def test_spec_from_dict_round_trip(self):
        raw = {
            "images": 12,
            "map_size": 8,
            "clusters": [["a", "b"], ["c"]],
            "seeds": 2,
            "master_seed": 3,
            "class_count": 5,
        }
        spec = spec_from_dict(raw)
        assert spec.images == 12
        assert spec.clusters == (("a", "b"), ("c",))
        assert spec.augmentations == ("a", "b", "c")
        assert spec.seed_labels == ("s1", "s2")

    def test_spec_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValidationError):
            spec_from_dict({"images": 12, "bogus": 1})
