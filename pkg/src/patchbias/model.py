"""A small convolutional classifier with hand-written reverse-mode gradients.

Fixed family: average-pool the patch down to a manageable size, then
conv 3x3/stride 2 -> ReLU -> conv 3x3/stride 2 -> global average pool ->
affine head with two logits. Parameters live in a flat float64 vector so
optimizer updates and gradient checks stay simple and exact; inputs may be
float32 and are upcast once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .tensorio import read_tensor, write_tensor

_KERNEL = 3
_STRIDE = 2


@dataclass(frozen=True)
class ClassifierSpec:
    input_height: int
    input_width: int
    channels: int
    k1: int = 8
    k2: int = 16
    pool_target: int = 32
    seed: int = 0

    @property
    def pool_factor(self) -> int:
        return max(1, math.ceil(max(self.input_height, self.input_width) / self.pool_target))

    @property
    def pooled_shape(self) -> tuple[int, int]:
        f = self.pool_factor
        return self.input_height // f, self.input_width // f

    def validate(self) -> None:
        if min(self.input_height, self.input_width, self.channels) < 1:
            raise ValidationError("input dims and channels must be >= 1")
        if self.k1 < 1 or self.k2 < 1:
            raise ValidationError("filter counts must be >= 1")
        if self.pool_target < 1:
            raise ValidationError("pool_target must be >= 1")
        hp, wp = self.pooled_shape
        # two valid 3x3 stride-2 convs need at least 7 pixels per axis
        if hp < 7 or wp < 7:
            raise ValidationError(
                f"pooled input {hp}x{wp} too small for two 3x3 stride-2 convolutions"
            )


@dataclass
class ParamVector:
    values: np.ndarray  # flat float64
    layout: tuple[tuple[str, tuple[int, ...], int], ...]  # (name, shape, offset)

    def view(self, name: str) -> np.ndarray:
        for nm, shape, offset in self.layout:
            if nm == name:
                size = int(np.prod(shape))
                return self.values[offset : offset + size].reshape(shape)
        raise KeyError(name)

    @property
    def size(self) -> int:
        return self.values.size

    def copy(self) -> "ParamVector":
        return ParamVector(values=self.values.copy(), layout=self.layout)


def param_layout(spec: ClassifierSpec) -> tuple[tuple[str, tuple[int, ...], int], ...]:
    shapes = [
        ("conv1_w", (_KERNEL, _KERNEL, spec.channels, spec.k1)),
        ("conv1_b", (spec.k1,)),
        ("conv2_w", (_KERNEL, _KERNEL, spec.k1, spec.k2)),
        ("conv2_b", (spec.k2,)),
        ("fc_w", (spec.k2, 2)),
        ("fc_b", (2,)),
    ]
    layout = []
    offset = 0
    for name, shape in shapes:
        layout.append((name, shape, offset))
        offset += int(np.prod(shape))
    return tuple(layout)


def init_params(spec: ClassifierSpec) -> ParamVector:
    """Fan-in-scaled uniform weights, zero biases, from the spec seed."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    layout = param_layout(spec)
    values = np.zeros(sum(int(np.prod(s)) for _, s, _ in layout), dtype=np.float64)
    pv = ParamVector(values=values, layout=layout)
    for name, shape, _ in layout:
        if name.endswith("_b"):
            continue
        fan_in = int(np.prod(shape[:-1]))
        bound = 1.0 / math.sqrt(fan_in)
        pv.view(name)[...] = rng.uniform(-bound, bound, size=shape)
    return pv


def unflatten(params: ParamVector) -> dict[str, np.ndarray]:
    return {name: params.view(name).copy() for name, _, _ in params.layout}


def flatten(spec: ClassifierSpec, tensors: dict[str, np.ndarray]) -> ParamVector:
    layout = param_layout(spec)
    values = np.zeros(sum(int(np.prod(s)) for _, s, _ in layout), dtype=np.float64)
    pv = ParamVector(values=values, layout=layout)
    for name, shape, _ in layout:
        if name not in tensors:
            raise ValidationError(f"missing tensor {name!r}")
        if tuple(tensors[name].shape) != shape:
            raise ValidationError(f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}")
        pv.view(name)[...] = tensors[name]
    return pv


def _avg_pool(x: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return x.astype(np.float64)
    b, h, w, c = x.shape
    hp, wp = h // factor, w // factor
    x = x[:, : hp * factor, : wp * factor, :].astype(np.float64)
    return x.reshape(b, hp, factor, wp, factor, c).mean(axis=(2, 4))


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B, Ho, Wo, 3, 3, C) windows at stride 2."""
    b, h, w, c = x.shape
    ho = (h - _KERNEL) // _STRIDE + 1
    wo = (w - _KERNEL) // _STRIDE + 1
    cols = np.empty((b, ho, wo, _KERNEL, _KERNEL, c), dtype=x.dtype)
    for di in range(_KERNEL):
        for dj in range(_KERNEL):
            cols[:, :, :, di, dj, :] = x[
                :, di : di + _STRIDE * (ho - 1) + 1 : _STRIDE, dj : dj + _STRIDE * (wo - 1) + 1 : _STRIDE, :
            ]
    return cols


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    ho, wo = dcols.shape[1], dcols.shape[2]
    for di in range(_KERNEL):
        for dj in range(_KERNEL):
            dx[
                :, di : di + _STRIDE * (ho - 1) + 1 : _STRIDE, dj : dj + _STRIDE * (wo - 1) + 1 : _STRIDE, :
            ] += dcols[:, :, :, di, dj, :]
    return dx


def _check_batch(spec: ClassifierSpec, batch: np.ndarray) -> None:
    if batch.ndim != 4 or batch.shape[1:] != (spec.input_height, spec.input_width, spec.channels):
        raise ValidationError(
            f"batch shape {batch.shape} does not match spec input "
            f"(B, {spec.input_height}, {spec.input_width}, {spec.channels})"
        )


def _forward_cached(spec: ClassifierSpec, params: ParamVector, batch: np.ndarray) -> dict:
    _check_batch(spec, batch)
    x = _avg_pool(batch, spec.pool_factor)
    w1, b1 = params.view("conv1_w"), params.view("conv1_b")
    w2, b2 = params.view("conv2_w"), params.view("conv2_b")
    w3, b3 = params.view("fc_w"), params.view("fc_b")

    cols1 = _im2col(x)
    z1 = np.tensordot(cols1, w1, axes=([3, 4, 5], [0, 1, 2])) + b1
    a1 = np.maximum(z1, 0.0)
    cols2 = _im2col(a1)
    z2 = np.tensordot(cols2, w2, axes=([3, 4, 5], [0, 1, 2])) + b2
    gap = z2.mean(axis=(1, 2))
    logits = gap @ w3 + b3
    return {
        "cols1": cols1, "z1": z1, "a1_shape": a1.shape,
        "cols2": cols2, "gap": gap, "logits": logits,
    }


def forward(spec: ClassifierSpec, params: ParamVector, batch: np.ndarray) -> np.ndarray:
    """Logits (B, 2) for a batch of patches."""
    return _forward_cached(spec, params, batch)["logits"]


def _softmax_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    se = ex.sum(axis=1, keepdims=True)
    logp = shifted - np.log(se)
    loss = float(-logp[np.arange(b), labels].mean())
    dlogits = ex / se
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return loss, dlogits


def loss_and_grad(
    spec: ClassifierSpec, params: ParamVector, batch: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its exact gradient as a flat vector."""
    labels = np.asarray(labels)
    if labels.shape != (batch.shape[0],):
        raise ValidationError(f"labels shape {labels.shape} does not match batch size {batch.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() > 1):
        raise ValidationError("labels must be binary")

    cache = _forward_cached(spec, params, batch)
    loss, dlogits = _softmax_ce(cache["logits"], labels)

    grad = ParamVector(values=np.zeros_like(params.values), layout=params.layout)
    gap = cache["gap"]
    grad.view("fc_w")[...] = gap.T @ dlogits
    grad.view("fc_b")[...] = dlogits.sum(axis=0)
    dgap = dlogits @ params.view("fc_w").T

    spatial = cache["cols2"].shape[1] * cache["cols2"].shape[2]
    dz2 = np.broadcast_to(
        dgap[:, None, None, :] / spatial,
        (gap.shape[0], cache["cols2"].shape[1], cache["cols2"].shape[2], gap.shape[1]),
    )
    grad.view("conv2_w")[...] = np.tensordot(cache["cols2"], dz2, axes=([0, 1, 2], [0, 1, 2]))
    grad.view("conv2_b")[...] = dz2.sum(axis=(0, 1, 2))
    dcols2 = np.tensordot(dz2, params.view("conv2_w"), axes=([3], [3]))
    da1 = _col2im(dcols2, cache["a1_shape"])
    dz1 = da1 * (cache["z1"] > 0)  # subgradient 0 at the ReLU kink
    grad.view("conv1_w")[...] = np.tensordot(cache["cols1"], dz1, axes=([0, 1, 2], [0, 1, 2]))
    grad.view("conv1_b")[...] = dz1.sum(axis=(0, 1, 2))
    return loss, grad.values


def predict(spec: ClassifierSpec, params: ParamVector, batch: np.ndarray) -> np.ndarray:
    """Argmax labels; an exact tie goes to label 0."""
    logits = forward(spec, params, batch)
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)


def relu_margin(spec: ClassifierSpec, params: ParamVector, batch: np.ndarray) -> float:
    """Smallest |pre-activation| at the ReLU; finite-difference checks need it > 0."""
    z1 = _forward_cached(spec, params, batch)["z1"]
    return float(np.abs(z1).min())


def save_checkpoint(path: str | Path, spec: ClassifierSpec, params: ParamVector) -> None:
    """Tensor container holds the flat parameters (as float32); JSON sidecar holds the spec."""
    path = Path(path)
    write_tensor(path, params.values.astype(np.float32))
    sidecar = {
        "classifier_spec": asdict(spec),
        "layout": [[name, list(shape), offset] for name, shape, offset in params.layout],
        "stored_dtype": "float32",
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[ClassifierSpec, ParamVector]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    spec = ClassifierSpec(**sidecar["classifier_spec"])
    values = read_tensor(path).astype(np.float64)
    layout = tuple((name, tuple(shape), offset) for name, shape, offset in sidecar["layout"])
    if layout != param_layout(spec):
        raise ValidationError(f"{path}: stored layout does not match the classifier spec")
    if values.shape != (sum(int(np.prod(s)) for _, s, _ in layout),):
        raise ValidationError(f"{path}: stored parameter count does not match the layout")
    return spec, ParamVector(values=values, layout=layout)
