"""Seeded synthetic grayscale datasets, trigger patches, and the PSB1 format.

Each class is a smoothed random texture; instances are that texture plus a
per-instance circular shift and Gaussian pixel noise, clamped to [0, 1].
Pixels are stored as float32 so that the on-disk format below round-trips
bit-exactly.

PSB1 file layout (little-endian):
    magic   4 bytes  b"PSB1"
    count   u32      number of instances
    width   u16
    height  u16
    classes u16      0 marks a trigger-patch file (count must then be 1)
    per instance: label u16, poisoned u8, width*height float32 (row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigurationError, FormatError, UsageError

MAGIC = b"PSB1"
_HEADER = struct.Struct("<IHHH")

# Texture construction constants. The smoothing length controls how distinct
# the class patterns stay under the +/-2 pixel shifts; the contrast sets how
# far textures spread around mid-gray. Together they fix task difficulty:
# centroids must stay separable while a 10-epoch model keeps enough headroom
# for poisoning effects to register on loss and confidence.
TEXTURE_SMOOTH_SIGMA = 2.0
TEXTURE_CONTRAST = 0.5


@dataclass(eq=False)
class Instance:
    """One grayscale image with its class label and poisoned bookkeeping flag."""

    pixels: np.ndarray  # float32, shape (height, width), values in [0, 1]
    label: int
    poisoned: bool = False

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.label == other.label
            and self.poisoned == other.poisoned
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(eq=False)
class Dataset:
    """Ordered collection of same-sized instances covering every class."""

    instances: list[Instance]
    class_count: int
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.instances)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.width == other.width
            and self.height == other.height
            and len(self.instances) == len(other.instances)
            and all(a == b for a, b in zip(self.instances, other.instances))
        )

    def pixel_stack(self) -> np.ndarray:
        """(N, height, width) float32 view of all instances, in order."""
        return np.stack([inst.pixels for inst in self.instances])

    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    def poisoned_count(self) -> int:
        return sum(1 for inst in self.instances if inst.poisoned)


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the synthetic dataset generator."""

    seed: int = 0
    class_count: int = 8
    per_class_train: int = 200
    per_class_test: int = 100
    width: int = 16
    height: int = 16
    noise_sigma: float = 0.1
    shift_range: int = 2  # instances get circular shifts drawn from [-range, range]

    def validate(self) -> None:
        if self.seed < 0:
            raise ConfigurationError(f"seed must be nonnegative, got {self.seed}")
        if self.class_count < 2:
            raise ConfigurationError(f"class_count must be >= 2, got {self.class_count}")
        if self.per_class_train < 1:
            raise ConfigurationError(f"per_class_train must be >= 1, got {self.per_class_train}")
        if self.per_class_test < 1:
            raise ConfigurationError(f"per_class_test must be >= 1, got {self.per_class_test}")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"image dims must be positive, got {self.width}x{self.height}")
        if not 0.0 <= self.noise_sigma < 0.5:
            raise ConfigurationError(f"noise_sigma must lie in [0, 0.5), got {self.noise_sigma}")
        if self.shift_range < 0:
            raise ConfigurationError(f"shift_range must be nonnegative, got {self.shift_range}")


def _class_textures(cfg: GenConfig, rng: np.random.Generator) -> list[np.ndarray]:
    textures = []
    for _ in range(cfg.class_count):
        raw = rng.uniform(size=(cfg.height, cfg.width))
        smooth = gaussian_filter(raw, sigma=TEXTURE_SMOOTH_SIGMA, mode="wrap")
        lo, hi = float(smooth.min()), float(smooth.max())
        if hi > lo:
            smooth = (smooth - lo) / (hi - lo)
        else:
            smooth = np.zeros_like(smooth)
        textures.append(0.5 + (smooth - 0.5) * TEXTURE_CONTRAST)
    return textures


def _draw_instances(cfg: GenConfig, rng, textures, per_class: int) -> list[Instance]:
    out = []
    span = cfg.shift_range
    for label in range(cfg.class_count):
        for _ in range(per_class):
            dy = int(rng.integers(-span, span + 1))
            dx = int(rng.integers(-span, span + 1))
            img = np.roll(textures[label], (dy, dx), axis=(0, 1))
            img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
            img = np.clip(img, 0.0, 1.0).astype(np.float32)
            out.append(Instance(pixels=img, label=label, poisoned=False))
    return out


def generate_dataset(cfg: GenConfig) -> tuple[Dataset, Dataset]:
    """Deterministically generate disjoint (train, test) datasets from cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    textures = _class_textures(cfg, rng)
    train = _draw_instances(cfg, rng, textures, cfg.per_class_train)
    test = _draw_instances(cfg, rng, textures, cfg.per_class_test)
    return (
        Dataset(train, cfg.class_count, cfg.width, cfg.height),
        Dataset(test, cfg.class_count, cfg.width, cfg.height),
    )


def generate_trigger_patch(seed: int, side: int) -> np.ndarray:
    """Square concentric-ring texture, one seeded intensity per 1-pixel ring."""
    if side < 2:
        raise UsageError(f"patch side must be >= 2, got {side}")
    rng = np.random.default_rng(seed)
    center = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    ring = np.round(np.hypot(yy - center, xx - center)).astype(np.int64)
    intensities = rng.uniform(size=int(ring.max()) + 1)
    return intensities[ring].astype(np.float32)


def _validate_dataset(ds: Dataset) -> None:
    seen = np.zeros(ds.class_count, dtype=bool)
    for i, inst in enumerate(ds.instances):
        if inst.pixels.shape != (ds.height, ds.width):
            raise ConfigurationError(f"instance {i} has shape {inst.pixels.shape}, expected {(ds.height, ds.width)}")
        if not (0 <= inst.label < ds.class_count):
            raise ConfigurationError(f"instance {i} label {inst.label} outside [0, {ds.class_count})")
        seen[inst.label] = True
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise ConfigurationError(f"class {missing} has no instances")


def save_dataset(ds: Dataset, path) -> None:
    """Write ds to path in PSB1 format."""
    _validate_dataset(ds)
    buf = bytearray()
    buf += MAGIC
    buf += _HEADER.pack(len(ds.instances), ds.width, ds.height, ds.class_count)
    for inst in ds.instances:
        buf += struct.pack("<HB", inst.label, 1 if inst.poisoned else 0)
        buf += np.ascontiguousarray(inst.pixels, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def _read_header(data: bytes, path) -> tuple[int, int, int, int]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0, expected {MAGIC!r}")
    if len(data) < 4 + _HEADER.size:
        raise FormatError(f"{path}: truncated header, expected {4 + _HEADER.size} bytes, got {len(data)}")
    count, width, height, classes = _HEADER.unpack_from(data, 4)
    expected = 4 + _HEADER.size + count * (3 + 4 * width * height)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {count} instances, got {len(data)}")
    return count, width, height, classes


def _read_instance(data: bytes, offset: int, width: int, height: int, path) -> tuple[Instance, int]:
    label, poisoned = struct.unpack_from("<HB", data, offset)
    if poisoned > 1:
        raise FormatError(f"{path}: invalid poisoned flag {poisoned} at byte offset {offset + 2}")
    offset += 3
    pixels = np.frombuffer(data, dtype="<f4", count=width * height, offset=offset).reshape(height, width).copy()
    if not np.isfinite(pixels).all() or pixels.min() < 0.0 or pixels.max() > 1.0:
        raise FormatError(f"{path}: pixel values outside [0, 1] at byte offset {offset}")
    offset += 4 * width * height
    return Instance(pixels=pixels, label=int(label), poisoned=bool(poisoned)), offset


def load_dataset(path) -> Dataset:
    """Read a PSB1 dataset; the inverse of save_dataset, bit-exactly."""
    data = Path(path).read_bytes()
    count, width, height, classes = _read_header(data, path)
    if classes == 0:
        raise FormatError(f"{path}: class count 0 marks a trigger-patch file, not a dataset")
    instances = []
    offset = 4 + _HEADER.size
    for i in range(count):
        inst, offset = _read_instance(data, offset, width, height, path)
        if inst.label >= classes:
            raise FormatError(f"{path}: instance {i} label {inst.label} outside [0, {classes})")
        instances.append(inst)
    ds = Dataset(instances, classes, width, height)
    try:
        _validate_dataset(ds)
    except ConfigurationError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return ds


def save_patch(patch: np.ndarray, path) -> None:
    """Write a trigger patch as a single-instance PSB1 file with class count 0."""
    patch = np.ascontiguousarray(patch, dtype="<f4")
    if patch.ndim != 2:
        raise UsageError(f"patch must be 2-D, got shape {patch.shape}")
    buf = bytearray()
    buf += MAGIC
    buf += _HEADER.pack(1, patch.shape[1], patch.shape[0], 0)
    buf += struct.pack("<HB", 0, 0)
    buf += patch.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_patch(path) -> np.ndarray:
    """Read a trigger patch written by save_patch."""
    data = Path(path).read_bytes()
    count, width, height, classes = _read_header(data, path)
    if classes != 0 or count != 1:
        raise FormatError(f"{path}: not a trigger-patch file (count={count}, classes={classes})")
    inst, _ = _read_instance(data, 4 + _HEADER.size, width, height, path)
    return inst.pixels
