from __future__ import annotations

import struct

import numpy as np
import pytest

from poisonbench.data import (
    Dataset,
    GenConfig,
    Instance,
    generate_dataset,
    generate_trigger_patch,
    load_dataset,
    load_patch,
    save_dataset,
    save_patch,
)
from poisonbench.errors import ConfigurationError, FormatError, UsageError
from oracles import nearest_centroid_accuracy

SMALL_CFG = GenConfig(seed=5, class_count=3, per_class_train=6, per_class_test=4, width=8, height=8)

# byte offsets inside a PSB1 file: 4 magic + 10 header, then 2 label + 1 flag
# before each instance's pixel block
FIRST_LABEL_AT = 14
FIRST_FLAG_AT = 16
FIRST_PIXEL_AT = 17


class TestGeneration:
    def test_deterministic_in_seed(self):
        a_train, a_test = generate_dataset(SMALL_CFG)
        b_train, b_test = generate_dataset(SMALL_CFG)
        assert a_train == b_train
        assert a_test == b_test

    def test_seed_changes_content(self):
        a_train, _ = generate_dataset(SMALL_CFG)
        b_train, _ = generate_dataset(GenConfig(seed=6, class_count=3, per_class_train=6,
                                                per_class_test=4, width=8, height=8))
        assert a_train != b_train

    def test_counts_and_labels(self):
        train, test = generate_dataset(SMALL_CFG)
        assert len(train) == 3 * 6
        assert len(test) == 3 * 4
        for ds, per_class in ((train, 6), (test, 4)):
            labels = ds.labels()
            for k in range(3):
                assert (labels == k).sum() == per_class

    def test_pixels_are_float32_in_unit_range(self):
        train, test = generate_dataset(SMALL_CFG)
        for ds in (train, test):
            stack = ds.pixel_stack()
            assert stack.dtype == np.float32
            assert stack.min() >= 0.0
            assert stack.max() <= 1.0

    def test_no_noise_no_shift_collapses_classes(self):
        cfg = GenConfig(seed=1, class_count=2, per_class_train=5, per_class_test=2,
                        width=8, height=8, noise_sigma=0.0, shift_range=0)
        train, _ = generate_dataset(cfg)
        for k in range(2):
            group = [i for i in train.instances if i.label == k]
            for inst in group[1:]:
                assert inst == group[0]

    def test_default_config_is_centroid_separable(self):
        train, test = generate_dataset(GenConfig())
        assert nearest_centroid_accuracy(train, test) >= 0.95

    def test_fresh_instances_are_unpoisoned(self):
        train, test = generate_dataset(SMALL_CFG)
        assert train.poisoned_count() == 0
        assert test.poisoned_count() == 0

    @pytest.mark.parametrize("field,value", [
        ("noise_sigma", 0.5),
        ("noise_sigma", -0.1),
        ("per_class_test", 0),
        ("class_count", 1),
        ("width", 0),
        ("shift_range", -1),
        ("seed", -3),
    ])
    def test_invalid_config_rejected(self, field, value):
        cfg = GenConfig(**{field: value})
        with pytest.raises(ConfigurationError):
            cfg.validate()


class TestTriggerPatch:
    def test_deterministic(self):
        assert np.array_equal(generate_trigger_patch(3, 5), generate_trigger_patch(3, 5))

    def test_values_in_unit_range_and_square(self):
        patch = generate_trigger_patch(9, 7)
        assert patch.shape == (7, 7)
        assert patch.min() >= 0.0
        assert patch.max() <= 1.0

    def test_concentric_rings_share_intensity(self):
        side = 9
        patch = generate_trigger_patch(4, side)
        center = (side - 1) / 2.0
        yy, xx = np.mgrid[0:side, 0:side]
        ring = np.round(np.hypot(yy - center, xx - center)).astype(int)
        for r in np.unique(ring):
            values = patch[ring == r]
            assert np.all(values == values.flat[0])

    def test_different_seeds_differ_in_many_pixels(self):
        a = generate_trigger_patch(1, 8)
        b = generate_trigger_patch(2, 8)
        assert (a != b).mean() >= 0.10

    def test_side_below_two_rejected(self):
        with pytest.raises(UsageError):
            generate_trigger_patch(0, 1)


class TestDatasetFile:
    def test_round_trip_bit_exact_with_flags(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        train.instances[2].poisoned = True
        train.instances[7].poisoned = True
        path = tmp_path / "train.psb"
        save_dataset(train, path)
        loaded = load_dataset(path)
        assert loaded == train
        assert loaded.poisoned_count() == 2
        for a, b in zip(loaded.instances, train.instances):
            assert a.pixels.tobytes() == b.pixels.tobytes()

    def test_save_then_save_is_byte_identical(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        p1, p2 = tmp_path / "a.psb", tmp_path / "b.psb"
        save_dataset(train, p1)
        save_dataset(train, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupted_magic_rejected(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "bad.psb"
        save_dataset(train, path)
        raw = bytearray(path.read_bytes())
        raw[0] = ord("X")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="offset 0"):
            load_dataset(path)

    def test_truncation_names_expected_and_actual_length(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "short.psb"
        save_dataset(train, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 100])
        with pytest.raises(FormatError, match=f"expected {len(raw)} bytes .* got {len(raw) - 100}"):
            load_dataset(path)

    def test_bad_poisoned_flag_rejected(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "flag.psb"
        save_dataset(train, path)
        raw = bytearray(path.read_bytes())
        raw[FIRST_FLAG_AT] = 2
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="poisoned flag"):
            load_dataset(path)

    def test_out_of_range_pixel_rejected(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "pix.psb"
        save_dataset(train, path)
        raw = bytearray(path.read_bytes())
        raw[FIRST_PIXEL_AT:FIRST_PIXEL_AT + 4] = struct.pack("<f", 2.0)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match=r"outside \[0, 1\]"):
            load_dataset(path)

    def test_out_of_range_label_rejected(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "label.psb"
        save_dataset(train, path)
        raw = bytearray(path.read_bytes())
        raw[FIRST_LABEL_AT:FIRST_LABEL_AT + 2] = struct.pack("<H", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="label 9"):
            load_dataset(path)

    def test_dataset_missing_a_class_rejected_on_save(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        only_zero = Dataset(
            instances=[i for i in train.instances if i.label == 0],
            class_count=3, width=8, height=8,
        )
        with pytest.raises(ConfigurationError, match="class 1"):
            save_dataset(only_zero, tmp_path / "x.psb")


class TestPatchFile:
    def test_round_trip(self, tmp_path):
        patch = generate_trigger_patch(8, 4)
        path = tmp_path / "patch.psb"
        save_patch(patch, path)
        assert np.array_equal(load_patch(path), patch)

    def test_dataset_loader_rejects_patch_file(self, tmp_path):
        path = tmp_path / "patch.psb"
        save_patch(generate_trigger_patch(8, 4), path)
        with pytest.raises(FormatError, match="trigger-patch"):
            load_dataset(path)

    def test_patch_loader_rejects_dataset_file(self, tmp_path):
        train, _ = generate_dataset(SMALL_CFG)
        path = tmp_path / "train.psb"
        save_dataset(train, path)
        with pytest.raises(FormatError, match="not a trigger-patch file"):
            load_patch(path)


class TestValueSemantics:
    def test_instance_equality_covers_flag_and_pixels(self):
        px = np.zeros((2, 2), dtype=np.float32)
        a = Instance(pixels=px.copy(), label=1)
        assert a == Instance(pixels=px.copy(), label=1)
        assert a != Instance(pixels=px.copy(), label=2)
        assert a != Instance(pixels=px.copy(), label=1, poisoned=True)
        changed = px.copy()
        changed[0, 0] = 0.5
        assert a != Instance(pixels=changed, label=1)
