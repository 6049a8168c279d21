"""Shared test utilities: random network families and finite-difference oracles."""

from __future__ import annotations

import numpy as np

from prunefuse.nets import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Network,
    NetworkSpec,
    ReLU,
    forward,
)


def random_mlp_spec(rng: np.random.Generator, min_units: int = 2) -> tuple[NetworkSpec, tuple[int, ...]]:
    """A small random Dense/ReLU stack; returns (spec, input_shape)."""
    in_dim = int(rng.integers(min_units, 7))
    classes = int(rng.integers(2, 5))
    layers = []
    units = in_dim
    for _ in range(int(rng.integers(1, 3))):
        h = int(rng.integers(min_units, 9))
        layers += [Dense(units, h), ReLU()]
        units = h
    layers.append(Dense(units, classes))
    return NetworkSpec(tuple(layers), classes), (in_dim,)


def random_conv_spec(rng: np.random.Generator, min_ch: int = 2) -> tuple[NetworkSpec, tuple[int, ...]]:
    """A small random conv stack with a gap or flatten head; returns (spec, input_shape)."""
    side = int(rng.integers(4, 7))
    in_ch = int(rng.integers(1, 3))
    classes = int(rng.integers(2, 5))
    layers = []
    h = w = side
    ch = in_ch
    for _ in range(int(rng.integers(1, 3))):
        out_ch = int(rng.integers(min_ch, 7))
        kernel = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        # pad < kernel keeps every receptive field on at least one real pixel
        pad = int(rng.integers(0, min(2, kernel)))
        if (h + 2 * pad - kernel) // stride + 1 < 1:
            kernel, stride, pad = 1, 1, 0
        layers += [Conv2D(ch, out_ch, kernel, stride, pad), ReLU()]
        h = (h + 2 * pad - kernel) // stride + 1
        w = (w + 2 * pad - kernel) // stride + 1
        ch = out_ch
    if rng.integers(0, 2) == 0:
        layers += [GlobalAvgPool(), Dense(ch, classes)]
    else:
        layers += [Flatten(), Dense(ch * h * w, classes)]
    return NetworkSpec(tuple(layers), classes), (in_ch, side, side)


def jitter_biases(net: Network, rng: np.random.Generator, lo: float = 0.05, hi: float = 0.15) -> None:
    """Push biases away from zero so structurally-zero activations cannot park
    a ReLU pre-activation exactly on the kink during finite-difference checks."""
    for _, b in net.params:
        b += rng.choice([-1.0, 1.0], size=b.shape) * rng.uniform(lo, hi, size=b.shape)


def kink_safe_batch(
    net: Network,
    input_shape: tuple[int, ...],
    rng: np.random.Generator,
    batch: int = 4,
    margin: float = 1e-3,
    tries: int = 50,
) -> np.ndarray:
    """Draw a batch whose ReLU pre-activations stay away from zero, so that
    1e-5 finite-difference probes cannot cross a kink."""
    relu_idx = [i for i, l in enumerate(net.spec.layers) if isinstance(l, ReLU)]
    for _ in range(tries):
        x = rng.normal(size=(batch, *input_shape))
        _, cache = forward(net, x)
        if all(np.abs(cache.acts[i]).min() > margin for i in relu_idx):
            return x
    raise AssertionError("could not find a kink-safe batch")


def fd_param_grads(net: Network, loss_fn, eps: float = 1e-5):
    """Central finite differences of loss_fn(net) w.r.t. every parameter."""
    grads = []
    for w, b in net.params:
        pair = []
        for arr in (w, b):
            g = np.zeros_like(arr)
            flat, gf = arr.ravel(), g.ravel()
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                lp = loss_fn(net)
                flat[i] = old - eps
                lm = loss_fn(net)
                flat[i] = old
                gf[i] = (lp - lm) / (2.0 * eps)
            pair.append(g)
        grads.append(tuple(pair))
    return grads


def max_rel_err(analytic, numeric, floor: float = 1e-6) -> float:
    worst = 0.0
    for (ga_w, ga_b), (gn_w, gn_b) in zip(analytic, numeric):
        for a, n in ((ga_w, gn_w), (ga_b, gn_b)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def params_equal(a: Network, b: Network) -> bool:
    return len(a.params) == len(b.params) and all(
        np.array_equal(wa, wb) and np.array_equal(ba, bb)
        for (wa, ba), (wb, bb) in zip(a.params, b.params)
    )
