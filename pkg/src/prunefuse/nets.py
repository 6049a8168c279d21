"""Minimal deterministic feed-forward network engine.

Tensors are C-contiguous float64 numpy arrays throughout; a batch has the
sample axis first.  All randomness is seeded, so (seed, spec) pairs produce
bit-identical networks and repeated forward passes are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Dense:
    in_units: int
    out_units: int


@dataclass(frozen=True)
class Conv2D:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


LayerSpec = Union[Dense, Conv2D, ReLU, Flatten, GlobalAvgPool]
PARAMETRIC = (Dense, Conv2D)


def _positive(name: str, value: int, idx: int) -> None:
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise ValueError(f"layer {idx}: {name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer stack ending in a classifier over `num_classes` outputs."""

    layers: tuple[LayerSpec, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.layers:
            raise ValueError("spec has no layers")
        # Symbolic shape walk: "image" tracks channels, "vector" exact feature
        # counts, "flat" a flattened image whose spatial extent is unknown
        # until an input shape is supplied.
        state: tuple | None = None
        last_param_out = None
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                _positive("in_units", layer.in_units, idx)
                _positive("out_units", layer.out_units, idx)
                if state is not None:
                    kind = state[0]
                    if kind == "image":
                        raise ValueError(
                            f"layer {idx}: Dense cannot consume an image stream; "
                            "insert Flatten or GlobalAvgPool"
                        )
                    if kind == "vector" and state[1] != layer.in_units:
                        raise ValueError(
                            f"layer {idx}: Dense expects {layer.in_units} inputs "
                            f"but predecessor provides {state[1]}"
                        )
                    if kind == "flat" and layer.in_units % state[1] != 0:
                        raise ValueError(
                            f"layer {idx}: Dense in_units {layer.in_units} is not a "
                            f"multiple of the {state[1]} flattened channels"
                        )
                state = ("vector", layer.out_units)
                last_param_out = layer.out_units
            elif isinstance(layer, Conv2D):
                _positive("in_ch", layer.in_ch, idx)
                _positive("out_ch", layer.out_ch, idx)
                _positive("kernel", layer.kernel, idx)
                _positive("stride", layer.stride, idx)
                if layer.pad < 0:
                    raise ValueError(f"layer {idx}: pad must be >= 0, got {layer.pad}")
                if state is not None:
                    if state[0] != "image" or state[1] != layer.in_ch:
                        raise ValueError(
                            f"layer {idx}: Conv2D expects an image stream with "
                            f"{layer.in_ch} channels, got {state!r}"
                        )
                state = ("image", layer.out_ch)
                last_param_out = layer.out_ch
            elif isinstance(layer, Flatten):
                if state is not None and state[0] == "image":
                    state = ("flat", state[1])
            elif isinstance(layer, GlobalAvgPool):
                if state is not None and state[0] != "image":
                    raise ValueError(f"layer {idx}: GlobalAvgPool needs an image stream")
                if state is not None:
                    state = ("vector", state[1])
            elif isinstance(layer, ReLU):
                pass
            else:
                raise ValueError(f"layer {idx}: unknown layer kind {layer!r}")
        if last_param_out is None:
            raise ValueError("spec contains no parametric layer")
        if last_param_out != self.num_classes:
            raise ValueError(
                f"last parametric layer emits {last_param_out} outputs, "
                f"expected num_classes={self.num_classes}"
            )

    def parametric_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, PARAMETRIC)]


def spec_to_dict(spec: NetworkSpec) -> dict:
    layers = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            layers.append({"kind": "dense", "in_units": layer.in_units, "out_units": layer.out_units})
        elif isinstance(layer, Conv2D):
            layers.append({
                "kind": "conv2d", "in_ch": layer.in_ch, "out_ch": layer.out_ch,
                "kernel": layer.kernel, "stride": layer.stride, "pad": layer.pad,
            })
        else:
            layers.append({"kind": type(layer).__name__.lower()})
    return {"layers": layers, "num_classes": spec.num_classes}


def spec_from_dict(d: dict) -> NetworkSpec:
    layers: list[LayerSpec] = []
    for entry in d["layers"]:
        kind = entry["kind"]
        if kind == "dense":
            layers.append(Dense(entry["in_units"], entry["out_units"]))
        elif kind == "conv2d":
            layers.append(Conv2D(entry["in_ch"], entry["out_ch"], entry["kernel"],
                                 entry["stride"], entry["pad"]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "globalavgpool":
            layers.append(GlobalAvgPool())
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return NetworkSpec(tuple(layers), d["num_classes"])


@dataclass
class Network:
    """A spec plus its parameter arrays, one (weight, bias) pair per parametric layer."""

    spec: NetworkSpec
    params: list[tuple[np.ndarray, np.ndarray]]
    init_seed: int

    def copy(self) -> "Network":
        return Network(self.spec, [(w.copy(), b.copy()) for w, b in self.params], self.init_seed)


def _fan_in(layer: LayerSpec) -> int:
    if isinstance(layer, Dense):
        return layer.in_units
    return layer.in_ch * layer.kernel * layer.kernel


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Seeded uniform init with fan-in scaling (bound sqrt(2/fan_in)); zero biases."""
    spec.validate()
    rng = np.random.default_rng(seed)
    params = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            bound = math.sqrt(2.0 / _fan_in(layer))
            w = rng.uniform(-bound, bound, size=(layer.out_units, layer.in_units))
            b = np.zeros(layer.out_units)
            params.append((w, b))
        elif isinstance(layer, Conv2D):
            bound = math.sqrt(2.0 / _fan_in(layer))
            w = rng.uniform(-bound, bound, size=(layer.out_ch, layer.in_ch, layer.kernel, layer.kernel))
            b = np.zeros(layer.out_ch)
            params.append((w, b))
    return Network(spec, params, int(seed))


def param_count(net: Network) -> int:
    return sum(w.size + b.size for w, b in net.params)


@dataclass
class ForwardCache:
    """Per-layer input activations captured for the matching backward pass."""

    net: Network
    acts: list[np.ndarray]
    logits: np.ndarray


def _dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Sequential accumulation over input features: a compact network built by
    # deleting zero-weight columns then produces bit-identical outputs.
    out = np.empty((x.shape[0], w.shape[0]))
    out[:] = b
    for j in range(w.shape[1]):
        out += x[:, j, None] * w[:, j]
    return out


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, layer: Conv2D) -> np.ndarray:
    n, c, h, wd = x.shape
    k, s, p = layer.kernel, layer.stride, layer.pad
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv kernel {k} does not fit input {h}x{wd} with pad {p}")
    if p > 0:
        xp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
        xp[:, :, p:p + h, p:p + wd] = x
    else:
        xp = x
    out = np.empty((n, w.shape[0], ho, wo))
    out[:] = b[None, :, None, None]
    # Channel loop stays outermost and sequential so channel deletion commutes
    # with the accumulation bit-for-bit.
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                plane = xp[:, ci, ki:ki + s * ho:s, kj:kj + s * wo:s]
                out += plane[:, None, :, :] * w[None, :, ci, ki, kj, None, None]
    return out


def forward(net: Network, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch, returning logits and the activation record."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError(f"batch must have a leading sample axis, got shape {x.shape}")
    acts: list[np.ndarray] = []
    p_idx = 0
    for idx, layer in enumerate(net.spec.layers):
        acts.append(x)
        if isinstance(layer, Dense):
            if x.ndim != 2 or x.shape[1] != layer.in_units:
                raise ValueError(
                    f"layer {idx}: Dense expects (batch, {layer.in_units}), got {x.shape}"
                )
            x = _dense_forward(x, *net.params[p_idx])
            p_idx += 1
        elif isinstance(layer, Conv2D):
            if x.ndim != 4 or x.shape[1] != layer.in_ch:
                raise ValueError(
                    f"layer {idx}: Conv2D expects (batch, {layer.in_ch}, H, W), got {x.shape}"
                )
            x = _conv_forward(x, net.params[p_idx][0], net.params[p_idx][1], layer)
            p_idx += 1
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, GlobalAvgPool):
            if x.ndim != 4:
                raise ValueError(f"layer {idx}: GlobalAvgPool expects 4-d input, got {x.shape}")
            x = x.mean(axis=(2, 3))
    if x.ndim != 2 or x.shape[1] != net.spec.num_classes:
        raise ValueError(
            f"network output shape {x.shape} does not match (batch, {net.spec.num_classes})"
        )
    return x, ForwardCache(net, acts, x)


def backward(net: Network, cache: ForwardCache, dlogits: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact chain-rule gradients for every parameter, given d loss / d logits."""
    if cache.net is not net:
        raise ValueError("cache does not belong to this network")
    if dlogits.shape != cache.logits.shape:
        raise ValueError(f"dlogits shape {dlogits.shape} != logits shape {cache.logits.shape}")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.params)  # type: ignore
    dx = np.asarray(dlogits, dtype=np.float64)
    p_idx = len(net.params)
    for idx in range(len(net.spec.layers) - 1, -1, -1):
        layer = net.spec.layers[idx]
        x = cache.acts[idx]
        if isinstance(layer, Dense):
            p_idx -= 1
            w, _ = net.params[p_idx]
            grads[p_idx] = (dx.T @ x, dx.sum(axis=0))
            dx = dx @ w
        elif isinstance(layer, Conv2D):
            p_idx -= 1
            w, _ = net.params[p_idx]
            dx = _conv_backward(dx, x, w, layer, grads, p_idx)
        elif isinstance(layer, ReLU):
            dx = dx * (x > 0)
        elif isinstance(layer, Flatten):
            dx = dx.reshape(x.shape)
        elif isinstance(layer, GlobalAvgPool):
            n, c, h, wd = x.shape
            dx = np.broadcast_to(dx[:, :, None, None] / (h * wd), x.shape).copy()
    return grads


def _conv_backward(dout, x, w, layer: Conv2D, grads, p_idx):
    n, c, h, wd = x.shape
    k, s, p = layer.kernel, layer.stride, layer.pad
    ho, wo = dout.shape[2], dout.shape[3]
    if p > 0:
        xp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
        xp[:, :, p:p + h, p:p + wd] = x
    else:
        xp = x
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                plane = xp[:, ci, ki:ki + s * ho:s, kj:kj + s * wo:s]
                dw[:, ci, ki, kj] = np.einsum("nohw,nhw->o", dout, plane)
                dxp[:, ci, ki:ki + s * ho:s, kj:kj + s * wo:s] += np.einsum(
                    "nohw,o->nhw", dout, w[:, ci, ki, kj]
                )
    db = dout.sum(axis=(0, 2, 3))
    grads[p_idx] = (dw, db)
    return dxp[:, :, p:p + h, p:p + wd] if p > 0 else dxp


def predict_proba(net: Network, batch: np.ndarray) -> np.ndarray:
    """Row-wise softmax of the logits, computed with max subtraction."""
    logits, _ = forward(net, batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def penultimate_embeddings(net: Network, batch: np.ndarray) -> np.ndarray:
    """Activation entering the final parametric layer, flattened to (batch, dim)."""
    _, cache = forward(net, batch)
    last_param = net.spec.parametric_indices()[-1]
    emb = cache.acts[last_param]
    return emb.reshape(emb.shape[0], -1).copy()


def forward_flops(spec: NetworkSpec, input_shape: tuple[int, ...]) -> int:
    """FLOPs for one single-sample inference.

    Dense costs 2*in*out, Conv2D costs 2*out_ch*in_ch*k^2*H_out*W_out, ReLU and
    GlobalAvgPool cost one op per activation they read, Flatten is free.
    """
    spec.validate()
    shape = tuple(int(d) for d in input_shape)
    total = 0
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            if len(shape) != 1 or shape[0] != layer.in_units:
                raise ValueError(
                    f"layer {idx}: Dense expects ({layer.in_units},), got {shape}"
                )
            total += 2 * layer.in_units * layer.out_units
            shape = (layer.out_units,)
        elif isinstance(layer, Conv2D):
            if len(shape) != 3 or shape[0] != layer.in_ch:
                raise ValueError(
                    f"layer {idx}: Conv2D expects ({layer.in_ch}, H, W), got {shape}"
                )
            _, h, wd = shape
            k, s, p = layer.kernel, layer.stride, layer.pad
            ho = (h + 2 * p - k) // s + 1
            wo = (wd + 2 * p - k) // s + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"layer {idx}: kernel {k} does not fit {h}x{wd} with pad {p}")
            total += 2 * layer.out_ch * layer.in_ch * k * k * ho * wo
            shape = (layer.out_ch, ho, wo)
        elif isinstance(layer, ReLU):
            total += int(np.prod(shape))
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, GlobalAvgPool):
            if len(shape) != 3:
                raise ValueError(f"layer {idx}: GlobalAvgPool expects 3-d shape, got {shape}")
            total += int(np.prod(shape))
            shape = (shape[0],)
    return int(total)


def training_flops(
    spec: NetworkSpec,
    input_shape: tuple[int, ...],
    n_samples: int,
    epochs: int,
    batch_passes_per_sample: int = 3,
) -> int:
    """Ledger cost of training: one forward plus ~2x backward per sample visit.

    Scoring passes are not included; callers add forward_flops once per scored
    candidate.
    """
    return forward_flops(spec, input_shape) * batch_passes_per_sample * n_samples * epochs
