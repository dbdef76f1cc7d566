from __future__ import annotations

import numpy as np
import pytest

from poisonbench.data import Dataset, Instance


def make_instances(rng: np.random.Generator, count: int, classes: int, side: int = 8):
    return [
        Instance(
            pixels=rng.uniform(size=(side, side)).astype(np.float32),
            label=int(rng.integers(classes)),
        )
        for _ in range(count)
    ]


def make_dataset(seed: int = 0, count: int = 24, classes: int = 4, side: int = 8) -> Dataset:
    """Small random dataset with every class guaranteed present."""
    rng = np.random.default_rng(seed)
    instances = make_instances(rng, count, classes, side)
    for k in range(classes):
        instances[k].label = k
    return Dataset(instances=instances, class_count=classes, width=side, height=side)


@pytest.fixture
def tiny_dataset() -> Dataset:
    return make_dataset()
