"""Minimal deterministic feed-forward image classifier on numpy.

The architecture is a fixed pipeline: zero or more conv blocks, each
``conv(k x k, stride 1, same padding) -> ReLU -> 2x2 max-pool``, followed by
``dense(hidden) -> ReLU -> dense(classes) -> softmax``. Everything runs in
float64, forward and backward are vectorized with im2col windows, and all
randomness flows through seeded ``numpy.random.default_rng`` streams so that
the same seeds always reproduce the same parameter bytes, losses and
predictions on one machine.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError, UsageError

PROB_FLOOR = 1e-12  # floor applied to the true-class probability before log


@dataclass(frozen=True)
class ArchSpec:
    """Architecture of the classifier.

    conv_blocks is a sequence of (filter_count, kernel_side) pairs; each block
    halves the spatial dimensions via its 2x2 max-pool.
    """

    input_width: int = 16
    input_height: int = 16
    conv_blocks: tuple[tuple[int, int], ...] = ((8, 3),)
    hidden_units: int = 64
    class_count: int = 8

    def validate(self) -> None:
        if self.input_width < 1:
            raise ConfigurationError(f"input_width must be positive, got {self.input_width}")
        if self.input_height < 1:
            raise ConfigurationError(f"input_height must be positive, got {self.input_height}")
        if self.class_count < 2:
            raise ConfigurationError(f"class_count must be >= 2, got {self.class_count}")
        if self.hidden_units < 1:
            raise ConfigurationError(f"hidden_units must be positive, got {self.hidden_units}")
        h, w = self.input_height, self.input_width
        for i, (filters, kernel) in enumerate(self.conv_blocks):
            if filters < 1:
                raise ConfigurationError(f"conv_blocks[{i}] filter_count must be positive, got {filters}")
            if kernel < 1 or kernel % 2 == 0:
                raise ConfigurationError(f"conv_blocks[{i}] kernel_side must be odd and positive, got {kernel}")
            if kernel > min(self.input_width, self.input_height):
                raise ConfigurationError(
                    f"conv_blocks[{i}] kernel_side {kernel} exceeds input side "
                    f"{min(self.input_width, self.input_height)}"
                )
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ConfigurationError(f"conv_blocks[{i}] pools the feature map below 1x1")

    def feature_dims(self) -> tuple[int, int, int]:
        """(channels, height, width) of the map entering the dense head."""
        h, w, c = self.input_height, self.input_width, 1
        for filters, _ in self.conv_blocks:
            c, h, w = filters, h // 2, w // 2
        return c, h, w


@dataclass(frozen=True)
class Model:
    """Parameter state of a classifier. Treated as an immutable value."""

    arch: ArchSpec
    params: tuple[np.ndarray, ...]
    seed: int

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params))


@dataclass(frozen=True)
class EpochRecord:
    epoch_index: int
    mean_loss: float
    wall_seconds: float


def init_model(arch: ArchSpec, seed: int) -> Model:
    """Build a model with fan-in-scaled uniform weights and zero biases.

    Weights for a layer with fan-in f are drawn uniformly from
    [-sqrt(6/f), sqrt(6/f)] out of a single rng stream in layer order, so the
    same (arch, seed) pair always yields bit-identical parameters.
    """
    arch.validate()
    rng = np.random.default_rng(seed)
    params: list[np.ndarray] = []
    c_in = 1
    for filters, kernel in arch.conv_blocks:
        fan_in = c_in * kernel * kernel
        lim = math.sqrt(6.0 / fan_in)
        params.append(rng.uniform(-lim, lim, size=(filters, c_in, kernel, kernel)))
        params.append(np.zeros(filters))
        c_in = filters
    c, h, w = arch.feature_dims()
    flat = c * h * w
    lim = math.sqrt(6.0 / flat)
    params.append(rng.uniform(-lim, lim, size=(arch.hidden_units, flat)))
    params.append(np.zeros(arch.hidden_units))
    lim = math.sqrt(6.0 / arch.hidden_units)
    params.append(rng.uniform(-lim, lim, size=(arch.class_count, arch.hidden_units)))
    params.append(np.zeros(arch.class_count))
    return Model(arch=arch, params=tuple(params), seed=int(seed))


def _softmax(logits: np.ndarray) -> np.ndarray:
    # shift by the row max so exp never overflows
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    # x: (N, C, H, W), w: (F, C, k, k) -> z: (N, F, H, W) with same padding
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    z = np.einsum("nchwij,fcij->nfhw", win, w, optimize=True)
    z += b[None, :, None, None]
    return z, win


def _conv_backward(dz, win, w, x_shape, need_dx):
    # dz: (N, F, H, W); win: (N, C, H, W, k, k) im2col view of the padded input
    dw = np.einsum("nchwij,nfhw->fcij", win, dz, optimize=True)
    db = dz.sum(axis=(0, 2, 3))
    dx = None
    if need_dx:
        n, c, h, width = x_shape
        k = w.shape[-1]
        p = k // 2
        dxp = np.zeros((n, c, h + 2 * p, width + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + h, j:j + width] += np.einsum(
                    "fc,nfhw->nchw", w[:, :, i, j], dz, optimize=True
                )
        dx = dxp[:, :, p:p + h, p:p + width]
    return dw, db, dx


def _pool_forward(a: np.ndarray):
    # 2x2 max-pool, stride 2; odd trailing rows/cols are dropped
    n, c, h, w = a.shape
    hh, wh = h // 2, w // 2
    win = (
        a[:, :, : hh * 2, : wh * 2]
        .reshape(n, c, hh, 2, wh, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, hh, wh, 4)
    )
    idx = win.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, in_shape):
    n, c, h, w = in_shape
    hh, wh = h // 2, w // 2
    dwin = np.zeros((n, c, hh, wh, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    da = np.zeros(in_shape)
    da[:, :, : hh * 2, : wh * 2] = (
        dwin.reshape(n, c, hh, wh, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh * 2, wh * 2)
    )
    return da


def _forward(model: Model, xb: np.ndarray):
    """Full forward pass on a batch (N, H, W); returns probs and caches."""
    cur = xb[:, None, :, :]
    conv_caches = []
    pi = 0
    for _ in model.arch.conv_blocks:
        w, b = model.params[pi], model.params[pi + 1]
        z, win = _conv_forward(cur, w, b)
        a = np.maximum(z, 0.0)
        pooled, idx = _pool_forward(a)
        conv_caches.append((win, z, idx, cur.shape, w))
        cur = pooled
        pi += 2
    pooled_shape = cur.shape
    flat = cur.reshape(cur.shape[0], -1)
    w1, b1 = model.params[pi], model.params[pi + 1]
    z1 = flat @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    w2, b2 = model.params[pi + 2], model.params[pi + 3]
    logits = a1 @ w2.T + b2
    probs = _softmax(logits)
    return probs, (conv_caches, pooled_shape, flat, z1, a1)


def _check_pixels(model: Model, pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.float64)
    expect = (model.arch.input_height, model.arch.input_width)
    if px.shape != expect:
        raise ShapeError(f"pixels shape {px.shape} does not match arch input {expect}")
    return px


def _stack_batch(model: Model, batch) -> tuple[np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise UsageError("batch must be nonempty")
    xb = np.stack([_check_pixels(model, inst.pixels) for inst in batch])
    yb = np.array([inst.label for inst in batch], dtype=np.int64)
    if yb.min() < 0 or yb.max() >= model.arch.class_count:
        raise UsageError(f"labels must lie in [0, {model.arch.class_count})")
    return xb, yb


def forward_probs(model: Model, pixels) -> np.ndarray:
    """Class-probability vector for one image; entries sum to 1."""
    px = _check_pixels(model, pixels)
    probs, _ = _forward(model, px[None])
    return probs[0]


def forward_probs_batch(model: Model, pixel_stack: np.ndarray) -> np.ndarray:
    """Probabilities for a stack of images (N, H, W) -> (N, K)."""
    xs = np.asarray(pixel_stack, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[1:] != (model.arch.input_height, model.arch.input_width):
        raise ShapeError(f"pixel stack shape {xs.shape} does not match arch input")
    probs, _ = _forward(model, xs)
    return probs


def predict(model: Model, pixels) -> tuple[int, float]:
    """Predicted class index and its probability; ties go to the lowest index."""
    probs = forward_probs(model, pixels)
    idx = int(np.argmax(probs))
    return idx, float(probs[idx])


def batch_loss(model: Model, batch) -> float:
    """Mean cross-entropy over the batch, true-class prob floored at 1e-12."""
    loss, _ = _loss_and_grads(model, *_stack_batch(model, batch), want_grads=False)
    return loss


def backward(model: Model, batch) -> tuple[np.ndarray, ...]:
    """Analytic gradients of batch_loss with respect to every parameter."""
    _, grads = _loss_and_grads(model, *_stack_batch(model, batch), want_grads=True)
    return grads


def _loss_and_grads(model: Model, xb: np.ndarray, yb: np.ndarray, want_grads: bool = True):
    probs, (conv_caches, pooled_shape, flat, z1, a1) = _forward(model, xb)
    n = xb.shape[0]
    rows = np.arange(n)
    p_true = probs[rows, yb]
    loss = float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))
    if not want_grads:
        return loss, None

    # softmax + mean cross-entropy: dL/dlogits = (probs - onehot) / N
    dlogits = probs.copy()
    dlogits[rows, yb] -= 1.0
    dlogits /= n

    pi = 2 * len(model.arch.conv_blocks)
    w1, w2 = model.params[pi], model.params[pi + 2]
    grads: list[np.ndarray | None] = [None] * len(model.params)

    grads[pi + 2] = dlogits.T @ a1
    grads[pi + 3] = dlogits.sum(axis=0)
    da1 = dlogits @ w2
    dz1 = da1 * (z1 > 0.0)
    grads[pi] = dz1.T @ flat
    grads[pi + 1] = dz1.sum(axis=0)
    dflat = dz1 @ w1

    dcur = dflat.reshape(pooled_shape)
    for block in range(len(model.arch.conv_blocks) - 1, -1, -1):
        win, z, idx, x_shape, w = conv_caches[block]
        da = _pool_backward(dcur, idx, z.shape)
        dz = da * (z > 0.0)
        dw, db, dx = _conv_backward(dz, win, w, x_shape, need_dx=block > 0)
        grads[2 * block] = dw
        grads[2 * block + 1] = db
        dcur = dx
    return loss, tuple(grads)


def sgd_step(model: Model, grads, lr: float) -> Model:
    """Plain SGD: params <- params - lr * grads. Returns a new Model."""
    if len(grads) != len(model.params):
        raise ShapeError(f"expected {len(model.params)} gradient arrays, got {len(grads)}")
    new_params = []
    for p, g in zip(model.params, grads):
        g = np.asarray(g)
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        new_params.append(p - lr * g)
    return Model(arch=model.arch, params=tuple(new_params), seed=model.seed)


def train_epoch(model: Model, train, lr: float, batch_size: int, epoch_seed: int):
    """One pass over the training set: shuffle, then one SGD step per batch.

    The shuffle rng is seeded from (model.seed, epoch_seed); callers pass the
    1-based epoch number as epoch_seed, which also becomes the record's
    epoch_index. mean_loss averages the per-batch losses measured before each
    step. Returns (updated model, EpochRecord).
    """
    n = len(train.instances)
    if n == 0:
        raise UsageError("training dataset must be nonempty")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([model.seed, int(epoch_seed)])
    order = rng.permutation(n)
    x_all = np.stack([np.asarray(inst.pixels, dtype=np.float64) for inst in train.instances])
    y_all = np.array([inst.label for inst in train.instances], dtype=np.int64)
    if x_all.shape[1:] != (model.arch.input_height, model.arch.input_width):
        raise ShapeError(f"dataset image shape {x_all.shape[1:]} does not match arch input")
    if y_all.max() >= model.arch.class_count:
        raise UsageError(f"labels must lie in [0, {model.arch.class_count})")

    t0 = time.perf_counter()
    losses = []
    for start in range(0, n, batch_size):
        pick = order[start:start + batch_size]
        loss, grads = _loss_and_grads(model, x_all[pick], y_all[pick])
        losses.append(loss)
        model = sgd_step(model, grads, lr)
    wall = time.perf_counter() - t0
    record = EpochRecord(epoch_index=int(epoch_seed), mean_loss=float(np.mean(losses)), wall_seconds=wall)
    return model, record
