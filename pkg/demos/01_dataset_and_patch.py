"""
Synthetic dataset and trigger patch
===================================

Generates the textured image classification dataset, inspects a few
instances, round-trips it through the PSB1 binary format, and builds the
concentric-ring trigger patch used by the local poisoning strategy.
"""

import tempfile
from pathlib import Path

import numpy as np

from poisonbench import GenConfig, generate_dataset, generate_trigger_patch
from poisonbench import save_dataset, load_dataset, save_patch, load_patch

# A small configuration keeps this demo quick; the library default is
# 8 classes with 200 train / 100 test instances per class at 16x16.
cfg = GenConfig(seed=7, class_count=4, per_class_train=40, per_class_test=10)
train, test = generate_dataset(cfg)

print(f"train: {len(train)} instances, test: {len(test)} instances")
print(f"image size: {train.width}x{train.height}, classes: {train.class_count}")

labels = train.labels()
for k in range(cfg.class_count):
    member = train.instances[int(np.argmax(labels == k))]
    pixels = member.pixels
    print(f"class {k}: {np.sum(labels == k)} instances, "
          f"pixel range [{pixels.min():.3f}, {pixels.max():.3f}], "
          f"mean {pixels.mean():.3f}")

# Same seed, same bytes: generation is fully deterministic.
again, _ = generate_dataset(cfg)
assert np.array_equal(train.pixel_stack(), again.pixel_stack())
print("regeneration with the same seed is bit-identical")

# Round-trip through the on-disk format.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "train.psb"
    save_dataset(train, path)
    print(f"\nsaved {path.stat().st_size} bytes to train.psb")
    loaded = load_dataset(path)
    assert np.array_equal(loaded.pixel_stack(), train.pixel_stack())
    assert np.array_equal(loaded.labels(), train.labels())
    print("PSB1 round trip preserved every pixel and label")

    # Patches use the same container with class_count=0 and a single entry.
    patch = generate_trigger_patch(seed=7, side=4)
    patch_path = Path(tmp) / "patch.psb"
    save_patch(patch, patch_path)
    reloaded = load_patch(patch_path)
    assert np.array_equal(reloaded, patch)

print("\ntrigger patch (4x4, concentric rings):")
for row in patch:
    print("  " + " ".join(f"{v:.3f}" for v in row))
