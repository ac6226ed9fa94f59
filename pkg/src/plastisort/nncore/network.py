"""Declarative network specs, parameter stores, and whole-network passes."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import layers as L

LAYER_KINDS = ("conv", "relu", "maxpool", "lrn", "dropout", "fc", "softmax-xent")
PARAM_KINDS = ("conv", "fc")


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out: int = 0  # conv out_channels / fc out_features
    kernel: int = 0  # conv kernel / maxpool window
    stride: int = 1
    pad: int = 0
    rate: float = 0.0  # dropout
    n: int = 5  # lrn depth radius (window size)
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "fc") and self.out < 1:
            raise ValueError(f"{self.kind} needs a positive output size")
        if self.kind in ("conv", "maxpool") and (self.kernel < 1 or self.stride < 1):
            raise ValueError(f"{self.kind} needs positive kernel and stride")
        if self.kind == "dropout" and not 0 <= self.rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.kind == "lrn" and (self.n < 1 or self.k <= 0):
            raise ValueError("lrn needs n >= 1 and k > 0")

    @property
    def has_params(self) -> bool:
        return self.kind in PARAM_KINDS

    def to_text(self) -> str:
        if self.kind == "conv":
            return f"conv({self.out},{self.kernel},{self.stride},{self.pad})"
        if self.kind == "maxpool":
            return f"maxpool({self.kernel},{self.stride})"
        if self.kind == "fc":
            return f"fc({self.out})"
        if self.kind == "dropout":
            return f"dropout({self.rate!r})"
        if self.kind == "lrn":
            return f"lrn({self.n},{self.alpha!r},{self.beta!r},{self.k!r})"
        return self.kind


def conv(out, kernel, stride=1, pad=0):
    return LayerSpec("conv", out=out, kernel=kernel, stride=stride, pad=pad)


def maxpool(window, stride):
    return LayerSpec("maxpool", kernel=window, stride=stride)


def fc(out):
    return LayerSpec("fc", out=out)


def dropout(rate):
    return LayerSpec("dropout", rate=rate)


def lrn(n=5, alpha=1e-4, beta=0.75, k=1.0):
    return LayerSpec("lrn", n=n, alpha=alpha, beta=beta, k=k)


RELU = LayerSpec("relu")
SOFTMAX_XENT = LayerSpec("softmax-xent")

_LAYER_RE = re.compile(r"([a-z-]+)(?:\(([^)]*)\))?")


def parse_layers(text: str) -> tuple[LayerSpec, ...]:
    """Parse ``"conv(8,3,1,1) relu maxpool(2,2) fc(2) softmax-xent"``."""
    specs = []
    for token in text.replace(",\n", ",").split():
        m = _LAYER_RE.fullmatch(token)
        if not m:
            raise ValueError(f"cannot parse layer {token!r}")
        kind, args = m.group(1), m.group(2)
        vals = [a for a in (args or "").split(",") if a.strip()]
        try:
            if kind == "conv":
                specs.append(conv(*(int(v) for v in vals)))
            elif kind == "maxpool":
                specs.append(maxpool(*(int(v) for v in vals)))
            elif kind == "fc":
                specs.append(fc(int(vals[0])))
            elif kind == "dropout":
                specs.append(dropout(float(vals[0])))
            elif kind == "lrn":
                n = int(vals[0]) if vals else 5
                specs.append(lrn(n, *(float(v) for v in vals[1:])))
            elif kind in ("relu", "softmax-xent") and not vals:
                specs.append(LayerSpec(kind))
            else:
                raise ValueError(f"cannot parse layer {token!r}")
        except (TypeError, IndexError) as exc:
            raise ValueError(f"bad arguments for layer {token!r}: {exc}") from None
    return tuple(specs)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # channels, height, width
    num_classes: int = 2

    def __post_init__(self):
        if not self.layers or self.layers[-1].kind != "softmax-xent":
            raise ShapeError("the final layer must be softmax-xent")
        if any(l.kind == "softmax-xent" for l in self.layers[:-1]):
            raise ShapeError("softmax-xent may only appear last")
        self.shapes()

    @property
    def input_size(self) -> int:
        return self.input_shape[1]

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample output shape of every layer, validating the chain."""
        shape: tuple[int, ...] = tuple(self.input_shape)
        out = []
        for idx, l in enumerate(self.layers):
            if l.kind in ("conv", "maxpool"):
                if len(shape) != 3:
                    raise ShapeError(f"layer {idx} ({l.kind}) needs a spatial input")
                c, h, w = shape
                pad = l.pad if l.kind == "conv" else 0
                oh = L.conv_output_size(h, l.kernel, l.stride, pad)
                ow = L.conv_output_size(w, l.kernel, l.stride, pad)
                if oh < 1 or ow < 1:
                    raise ShapeError(f"layer {idx} ({l.kind}) shrinks {h}x{w} below 1x1")
                shape = (l.out if l.kind == "conv" else c, oh, ow)
            elif l.kind == "lrn" and len(shape) != 3:
                raise ShapeError(f"layer {idx} (lrn) needs a spatial input")
            elif l.kind == "fc":
                shape = (l.out,)
            elif l.kind == "softmax-xent" and shape != (self.num_classes,):
                raise ShapeError(
                    f"network yields {shape} logits, expected ({self.num_classes},)"
                )
            out.append(shape)
        return out

    def param_shapes(self) -> dict[int, tuple[tuple[int, ...], tuple[int, ...]]]:
        shapes = {}
        prev: tuple[int, ...] = tuple(self.input_shape)
        for idx, (l, shp) in enumerate(zip(self.layers, self.shapes())):
            if l.kind == "conv":
                shapes[idx] = ((l.out, prev[0], l.kernel, l.kernel), (l.out,))
            elif l.kind == "fc":
                shapes[idx] = ((l.out, int(np.prod(prev))), (l.out,))
            prev = shp
        return shapes

    def layers_text(self) -> str:
        return " ".join(l.to_text() for l in self.layers)


def alexnet_spec(name="alexnet-full", width_divisor=1, fc_width=4096, num_classes=2, size=227):
    """The 8-layer AlexNet topology (5 conv + 3 fc), channel counts divided by ``width_divisor``."""
    ch = [max(1, c // width_divisor) for c in (96, 256, 384, 384, 256)]
    layers = (
        conv(ch[0], 11, 4, 0), RELU, lrn(), maxpool(3, 2),
        conv(ch[1], 5, 1, 2), RELU, lrn(), maxpool(3, 2),
        conv(ch[2], 3, 1, 1), RELU,
        conv(ch[3], 3, 1, 1), RELU,
        conv(ch[4], 3, 1, 1), RELU, maxpool(3, 2),
        fc(fc_width), RELU, dropout(0.5),
        fc(fc_width), RELU, dropout(0.5),
        fc(num_classes), SOFTMAX_XENT,
    )  # fmt: skip
    return NetworkSpec(name, layers, (3, size, size), num_classes)


def tiny_spec(num_classes=2, size=32):
    """Small conv net for fast tests and smoke runs."""
    layers = (
        conv(4, 3, 1, 1), RELU, maxpool(2, 2),
        conv(8, 3, 1, 1), RELU, lrn(), maxpool(2, 2),
        fc(16), RELU, dropout(0.5),
        fc(num_classes), SOFTMAX_XENT,
    )  # fmt: skip
    return NetworkSpec("tiny", layers, (3, size, size), num_classes)


BUILTIN_SPECS = {
    "alexnet-full": lambda: alexnet_spec("alexnet-full"),
    "alexnet-mini": lambda: alexnet_spec("alexnet-mini", width_divisor=8, fc_width=256),
    "tiny": tiny_spec,
}


def get_spec(name: str) -> NetworkSpec:
    try:
        return BUILTIN_SPECS[name]()
    except KeyError:
        raise ValueError(f"unknown network {name!r}; choose from {sorted(BUILTIN_SPECS)}") from None


# --- parameters ----------------------------------------------------------

@dataclass
class WeightStore:
    """Parameter tensors ``(weight, bias)`` keyed by layer index, plus input stats."""

    params: dict[int, tuple[np.ndarray, np.ndarray]]
    stats: object = None  # preprocess.InputStats or None

    def items(self):
        return sorted(self.params.items())

    def tensors(self):
        for idx, (w, b) in self.items():
            yield (idx, 0), w
            yield (idx, 1), b

    def map(self, fn) -> "WeightStore":
        return WeightStore({i: (fn(w), fn(b)) for i, (w, b) in self.items()}, self.stats)

    def astype(self, dtype) -> "WeightStore":
        return self.map(lambda a: a.astype(dtype))

    def zeros_like(self) -> "WeightStore":
        return self.map(np.zeros_like)

    def check_against(self, spec: NetworkSpec) -> None:
        expected = spec.param_shapes()
        if set(expected) != set(self.params):
            raise ShapeError(
                f"parameterized layers {sorted(self.params)} do not match spec {sorted(expected)}"
            )
        for idx, (ws, bs) in expected.items():
            w, b = self.params[idx]
            if w.shape != ws or b.shape != bs:
                raise ShapeError(
                    f"layer {idx} ({spec.layers[idx].kind}): weight {w.shape}/bias {b.shape}, "
                    f"spec expects {ws}/{bs}"
                )

    def equal(self, other: "WeightStore") -> bool:
        if sorted(self.params) != sorted(other.params):
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)
            for (_, a), (_, b) in zip(self.tensors(), other.tensors())
        )


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(spec: NetworkSpec, seed: int, dtype=np.float32) -> WeightStore:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for idx, (ws, bs) in sorted(spec.param_shapes().items()):
        if len(ws) == 4:
            rf = ws[2] * ws[3]
            fan_in, fan_out = ws[1] * rf, ws[0] * rf
        else:
            fan_in, fan_out = ws[1], ws[0]
        bound = glorot_bound(fan_in, fan_out)
        w = rng.uniform(-bound, bound, size=ws).astype(dtype)
        params[idx] = (w, np.zeros(bs, dtype=dtype))
    return WeightStore(params)


# --- passes ----------------------------------------------------------------

@dataclass
class Activations:
    logits: np.ndarray
    caches: list = field(default_factory=list)
    train: bool = False


def _check(arr, idx, kind):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite activation after layer {idx} ({kind})")


def forward(
    spec: NetworkSpec,
    weights: WeightStore,
    x: np.ndarray,
    train: bool = False,
    seed: int | None = None,
    checked: bool = False,
) -> Activations:
    """Run every layer up to (excluding) softmax-xent and return logits with caches.

    ``train=True`` enables dropout, with masks drawn from ``seed``.
    """
    if tuple(x.shape[1:]) != tuple(spec.input_shape):
        raise ShapeError(f"input shape {x.shape[1:]} != spec input {spec.input_shape}")
    dtype = next(weights.tensors())[1].dtype
    a = np.ascontiguousarray(x, dtype=dtype)
    caches = []
    rng = np.random.default_rng([0 if seed is None else seed, 0x5EED]) if train else None
    for idx, l in enumerate(spec.layers[:-1]):
        if l.kind == "conv":
            w, b = weights.params[idx]
            a, cache = L.conv_forward(a, w, b, l.stride, l.pad)
        elif l.kind == "relu":
            a, cache = L.relu_forward(a)
        elif l.kind == "maxpool":
            a, cache = L.maxpool_forward(a, l.kernel, l.stride)
        elif l.kind == "lrn":
            a, cache = L.lrn_forward(a, l.n, l.alpha, l.beta, l.k)
        elif l.kind == "dropout":
            mask = L.dropout_mask(a.shape, l.rate, rng, dtype.type) if train and l.rate else None
            a, cache = L.dropout_forward(a, mask)
        elif l.kind == "fc":
            w, b = weights.params[idx]
            a, cache = L.fc_forward(a, w, b)
        if checked:
            _check(a, idx, l.kind)
        caches.append(cache)
    return Activations(a, caches, train)


def backward(
    spec: NetworkSpec, weights: WeightStore, acts: Activations, labels
) -> tuple[float, WeightStore]:
    """Mean softmax cross-entropy and its exact gradient for every parameter."""
    loss, d = L.softmax_xent(acts.logits, labels)
    grads = {}
    for idx in range(len(spec.layers) - 2, -1, -1):
        l = spec.layers[idx]
        cache = acts.caches[idx]
        if idx == 0 and l.kind == "conv":
            _, dw, db = L.conv_backward(d, cache, need_dx=False)
            grads[idx] = (dw, db)
            break
        if l.kind == "conv":
            d, dw, db = L.conv_backward(d, cache)
            grads[idx] = (dw, db)
        elif l.kind == "fc":
            d, dw, db = L.fc_backward(d, cache)
            grads[idx] = (dw, db)
        elif l.kind == "relu":
            d = L.relu_backward(d, cache)
        elif l.kind == "maxpool":
            d = L.maxpool_backward(d, cache)
        elif l.kind == "lrn":
            d = L.lrn_backward(d, cache)
        elif l.kind == "dropout":
            d = L.dropout_backward(d, cache)
    return loss, WeightStore(dict(sorted(grads.items())))


def backward_input(spec, weights, acts, labels) -> np.ndarray:
    """Gradient of the loss with respect to the network input."""
    _, d = L.softmax_xent(acts.logits, labels)
    for idx in range(len(spec.layers) - 2, -1, -1):
        l = spec.layers[idx]
        cache = acts.caches[idx]
        if l.kind in ("conv", "fc"):
            d = (L.conv_backward if l.kind == "conv" else L.fc_backward)(d, cache)[0]
        elif l.kind == "relu":
            d = L.relu_backward(d, cache)
        elif l.kind == "maxpool":
            d = L.maxpool_backward(d, cache)
        elif l.kind == "lrn":
            d = L.lrn_backward(d, cache)
        elif l.kind == "dropout":
            d = L.dropout_backward(d, cache)
    return d


class Prediction(NamedTuple):
    classes: np.ndarray
    probabilities: np.ndarray


def predict(spec: NetworkSpec, weights: WeightStore, x: np.ndarray) -> Prediction:
    """Eval-mode class indices (ties to the lowest index) and softmax probabilities."""
    logits = forward(spec, weights, x).logits.astype(np.float64)
    probs = L.softmax(logits)
    return Prediction(probs.argmax(axis=1), probs)


def with_classes(spec: NetworkSpec, num_classes: int) -> NetworkSpec:
    """Copy of ``spec`` whose last fc layer emits ``num_classes`` logits."""
    layers = list(spec.layers)
    last_fc = max(i for i, l in enumerate(layers) if l.kind == "fc")
    layers[last_fc] = replace(layers[last_fc], out=num_classes)
    return NetworkSpec(spec.name, tuple(layers), spec.input_shape, num_classes)
