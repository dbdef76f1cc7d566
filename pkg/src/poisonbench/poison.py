"""Incremental gray-box poisoning of an in-memory training set.

A poisoning round runs strictly between two training epochs: it samples a
victim subset of the training set without replacement, then overwrites victim
pixels either with a trigger patch resampled into a random rectangle (local
strategy) or with another training image wholesale (global strategy). Labels
are never touched, victims accumulate across rounds, and the engine sees only
the dataset, never the model or its gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Instance
from .errors import ConfigurationError, UsageError

LOCAL_PATCH = "local"
GLOBAL_REPLACEMENT = "global"
STRATEGIES = (LOCAL_PATCH, GLOBAL_REPLACEMENT)


@dataclass(frozen=True)
class PatchArea:
    """Rectangle of pixels to overwrite: top-left (u0, v0), size pw x ph.

    u indexes columns (width axis), v indexes rows (height axis).
    """

    u0: int
    v0: int
    pw: int
    ph: int

    def validate(self, width: int, height: int) -> None:
        if self.pw < 1 or self.ph < 1:
            raise UsageError(f"patch area must be at least 1x1, got {self.pw}x{self.ph}")
        if self.u0 < 0 or self.v0 < 0 or self.u0 + self.pw > width or self.v0 + self.ph > height:
            raise UsageError(
                f"patch area ({self.u0},{self.v0})+{self.pw}x{self.ph} falls outside {width}x{height}"
            )


@dataclass(frozen=True)
class PoisonPlan:
    """Attack parameters: fraction per round, round stride, and strategy."""

    alpha: float
    beta: int
    strategy: str
    epochs: int
    seed: int
    patch: np.ndarray | None = None  # trigger image, local strategy only

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 1 <= self.beta <= self.epochs:
            raise ConfigurationError(f"beta must lie in [1, epochs={self.epochs}], got {self.beta}")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be nonnegative, got {self.seed}")
        if self.strategy == LOCAL_PATCH:
            if self.patch is None:
                raise ConfigurationError("local strategy requires a trigger patch")
            if self.patch.ndim != 2 or min(self.patch.shape) < 1:
                raise ConfigurationError(f"trigger patch must be a 2-D image, got shape {self.patch.shape}")


@dataclass(frozen=True)
class RoundSummary:
    round_index: int
    epoch_after: int
    victim_indices: tuple[int, ...]  # sorted ascending
    newly_poisoned_count: int
    cumulative_poisoned_count: int


def plan_rounds(epochs: int, beta: int) -> list[int]:
    """Epoch indices after which a round runs: 1, 1+beta, 1+2*beta, ...

    Rounds are scheduled only up to epochs-1; a round after the final epoch
    could not influence training, so it is dropped. beta=1 therefore yields
    epochs-1 rounds and beta=epochs exactly one round after the first epoch.
    """
    if epochs < 2:
        raise ConfigurationError(f"epochs must be >= 2, got {epochs}")
    if not 1 <= beta <= epochs:
        raise ConfigurationError(f"beta must lie in [1, epochs={epochs}], got {beta}")
    return list(range(1, epochs, beta))


def select_victims(train: Dataset, alpha: float, round_rng: np.random.Generator) -> np.ndarray:
    """Sorted distinct indices of max(1, floor(alpha * size)) victims."""
    size = len(train.instances)
    if size == 0:
        raise UsageError("cannot select victims from an empty dataset")
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1], got {alpha}")
    # tiny epsilon guards against 0.15 * 100 = 14.999... style float drift
    count = max(1, math.floor(alpha * size + 1e-9))
    picks = round_rng.choice(size, size=count, replace=False)
    return np.sort(picks)


def sample_patch_area(width: int, height: int, patch: np.ndarray, area_rng: np.random.Generator) -> PatchArea:
    """Random square area with side in [round(W/8), round(W/4)], fully inside."""
    if width < 8 or height < 8:
        raise ConfigurationError(f"image must be at least 8x8 to host a patch, got {width}x{height}")
    lo, hi = round(width / 8), round(width / 4)
    if hi > min(width, height):
        raise ConfigurationError(f"image {width}x{height} too small for patch sides up to {hi}")
    side = int(area_rng.integers(lo, hi + 1))
    u0 = int(area_rng.integers(0, width - side + 1))
    v0 = int(area_rng.integers(0, height - side + 1))
    area = PatchArea(u0=u0, v0=v0, pw=side, ph=side)
    area.validate(width, height)
    return area


def _resample_nearest(patch: np.ndarray, ph: int, pw: int) -> np.ndarray:
    # index map collapses to the identity when source and target sizes match
    rows = (np.arange(ph) * patch.shape[0] // ph).astype(np.int64)
    cols = (np.arange(pw) * patch.shape[1] // pw).astype(np.int64)
    return patch[np.ix_(rows, cols)]


def apply_local_patch(inst: Instance, patch: np.ndarray, area: PatchArea) -> Instance:
    """Overwrite the area with the nearest-neighbor-resampled patch.

    Pixels outside the area and the label are bit-identical to the input;
    the poisoned flag is set on the result.
    """
    height, width = inst.pixels.shape
    area.validate(width, height)
    pixels = inst.pixels.copy()
    pixels[area.v0:area.v0 + area.ph, area.u0:area.u0 + area.pw] = _resample_nearest(
        np.asarray(patch, dtype=pixels.dtype), area.ph, area.pw
    )
    return Instance(pixels=pixels, label=inst.label, poisoned=True)


def apply_global_replacement(inst: Instance, donor: Instance) -> Instance:
    """Replace every pixel with the donor's while keeping the victim's label."""
    if donor.pixels.shape != inst.pixels.shape:
        raise UsageError(f"donor shape {donor.pixels.shape} does not match victim {inst.pixels.shape}")
    return Instance(pixels=donor.pixels.copy(), label=inst.label, poisoned=True)


def execute_round(train: Dataset, plan: PoisonPlan, round_index: int) -> RoundSummary:
    """Run poisoning round round_index (1-based), mutating train in place.

    Victim selection, patch areas and donors all come from one rng seeded
    from (plan.seed, round_index), consumed in ascending victim order, so a
    fixed plan always produces the same mutation.
    """
    plan.validate()
    rounds = plan_rounds(plan.epochs, plan.beta)
    if not 1 <= round_index <= len(rounds):
        raise UsageError(f"round_index {round_index} outside schedule of {len(rounds)} rounds")
    size = len(train.instances)
    if plan.strategy == GLOBAL_REPLACEMENT and size < 2:
        raise UsageError("global replacement needs at least 2 instances to draw a donor from")
    rng = np.random.default_rng([plan.seed, round_index])
    victims = select_victims(train, plan.alpha, rng)
    newly = sum(1 for i in victims if not train.instances[i].poisoned)
    for i in victims:
        i = int(i)
        if plan.strategy == LOCAL_PATCH:
            area = sample_patch_area(train.width, train.height, plan.patch, rng)
            train.instances[i] = apply_local_patch(train.instances[i], plan.patch, area)
        else:
            donor_idx = int(rng.integers(0, size - 1))
            if donor_idx >= i:
                donor_idx += 1  # donor pool excludes the victim itself
            train.instances[i] = apply_global_replacement(train.instances[i], train.instances[donor_idx])

    return RoundSummary(
        round_index=round_index,
        epoch_after=rounds[round_index - 1],
        victim_indices=tuple(int(i) for i in victims),
        newly_poisoned_count=int(newly),
        cumulative_poisoned_count=train.poisoned_count(),
    )
