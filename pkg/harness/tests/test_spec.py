"""Spec parsing, defaults, validation, and seed derivation."""

import json

import pytest

from camharness import (
    AUGMENTATION_NAMES,
    DEFAULT_AUGMENTATION_PARAMS,
    ExperimentSpec,
    SpecError,
    derive_seed,
    load_spec,
    spec_from_dict,
)


class TestDefaults:
    def test_default_spec_matches_full_scale_run(self):
        spec = ExperimentSpec()
        assert spec.dataset == "cifar10"
        assert spec.augmentations == AUGMENTATION_NAMES
        assert spec.seeds == (1, 2, 3)
        assert spec.epochs == 30
        assert spec.batch_size == 32
        assert spec.learning_rate == 1e-3
        assert spec.weight_decay == 1e-5
        assert spec.val_fraction == 0.1
        assert spec.scale == 1.0
        assert spec.image_size == 224

    def test_empty_mapping_yields_defaults(self):
        assert spec_from_dict({}) == ExperimentSpec()

    def test_model_keys_baseline_first_then_product_order(self):
        spec = ExperimentSpec(augmentations=("affine", "cutmix"), seeds=(2, 7))
        assert spec.model_keys() == (
            "baseline",
            "affine__s2",
            "affine__s7",
            "cutmix__s2",
            "cutmix__s7",
        )

    def test_dataset_name_normalizes(self):
        assert spec_from_dict({"dataset": "CIFAR-10"}).dataset == "cifar10"

    def test_to_dict_round_trips(self):
        spec = ExperimentSpec(
            augmentations=("elastic",),
            seeds=(5,),
            epochs=2,
            scale=0.5,
            augmentation_params={"elastic": {"alpha": 30.0}},
        )
        assert spec_from_dict(spec.to_dict()) == spec


class TestValidation:
    @pytest.mark.parametrize(
        "overrides, fragment",
        [
            ({"dataset": "mnist"}, "unsupported dataset"),
            ({"augmentations": ()}, "no augmentations"),
            ({"augmentations": ("affine", "affine")}, "duplicates"),
            ({"augmentations": ("mixup",)}, "unknown augmentation"),
            ({"seeds": ()}, "no seeds"),
            ({"seeds": (1, 1)}, "duplicates"),
            ({"seeds": (1, "two")}, "integers"),
            ({"seeds": (True,)}, "integers"),
            ({"epochs": 0}, "epochs"),
            ({"batch_size": 0}, "batch_size"),
            ({"learning_rate": 0.0}, "learning_rate"),
            ({"weight_decay": -1e-5}, "weight_decay"),
            ({"val_fraction": 1.0}, "val_fraction"),
            ({"val_fraction": 0.0}, "val_fraction"),
            ({"scale": 0.0}, "scale"),
            ({"scale": 1.5}, "scale"),
            ({"image_size": 4}, "image_size"),
        ],
    )
    def test_bad_field_values_are_rejected(self, overrides, fragment):
        with pytest.raises(SpecError, match=fragment):
            ExperimentSpec(**overrides)

    def test_unknown_key_is_rejected_by_name(self):
        with pytest.raises(SpecError, match="lerning_rate"):
            spec_from_dict({"lerning_rate": 1e-3})

    def test_augmentations_must_be_a_list(self):
        with pytest.raises(SpecError, match="must be a list"):
            spec_from_dict({"augmentations": "affine"})

    def test_params_for_unknown_augmentation_rejected(self):
        with pytest.raises(SpecError, match="unknown augmentation 'mixup'"):
            ExperimentSpec(augmentation_params={"mixup": {"alpha": 1.0}})

    def test_unknown_param_key_rejected(self):
        with pytest.raises(SpecError, match="kernel"):
            ExperimentSpec(augmentation_params={"gaussian_blur": {"kernel": 3}})

    def test_equalize_takes_no_parameters(self):
        with pytest.raises(SpecError, match="equalize"):
            ExperimentSpec(augmentation_params={"equalize": {"p": 0.5}})

    def test_non_numeric_param_rejected(self):
        with pytest.raises(SpecError, match="must be a number"):
            ExperimentSpec(augmentation_params={"cutmix": {"alpha": "big"}})


class TestResolvedParams:
    def test_defaults_cover_every_augmentation(self):
        spec = ExperimentSpec()
        for name in AUGMENTATION_NAMES:
            assert spec.resolved_params(name) == DEFAULT_AUGMENTATION_PARAMS[name]

    def test_overrides_merge_over_defaults(self):
        spec = ExperimentSpec(augmentation_params={"gaussian_blur": {"kernel_size": 3}})
        resolved = spec.resolved_params("gaussian_blur")
        assert resolved["kernel_size"] == 3
        assert resolved["sigma_min"] == DEFAULT_AUGMENTATION_PARAMS["gaussian_blur"]["sigma_min"]

    def test_resolved_params_returns_a_copy(self):
        spec = ExperimentSpec()
        spec.resolved_params("affine")["degrees"] = 360.0
        assert spec.resolved_params("affine")["degrees"] == 15.0


class TestDeriveSeed:
    def test_stable_and_purpose_sensitive(self):
        assert derive_seed(7, "split") == derive_seed(7, "split")
        assert derive_seed(7, "split") != derive_seed(7, "order")
        assert derive_seed(7, "split") != derive_seed(8, "split")

    def test_fits_in_63_bits(self):
        for purpose in ("a", "b", "augment-content:12345"):
            value = derive_seed(123, purpose)
            assert 0 <= value < 2**63


class TestLoadSpec:
    def test_json_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"seeds": [4, 5], "epochs": 2}))
        spec = load_spec(path)
        assert spec.seeds == (4, 5)
        assert spec.epochs == 2

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("augmentations:\n  - equalize\nscale: 0.25\n")
        spec = load_spec(path)
        assert spec.augmentations == ("equalize",)
        assert spec.scale == 0.25

    def test_empty_yaml_gives_defaults(self, tmp_path):
        path = tmp_path / "spec.yml"
        path.write_text("")
        assert load_spec(path) == ExperimentSpec()

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecError, match="cannot read"):
            load_spec(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text("{not json")
        with pytest.raises(SpecError, match="invalid JSON"):
            load_spec(path)

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("a: [unclosed")
        with pytest.raises(SpecError, match="invalid YAML"):
            load_spec(path)

    def test_non_mapping_root(self, tmp_path):
        path = tmp_path / "spec.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(SpecError, match="mapping"):
            load_spec(path)
