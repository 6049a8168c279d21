"""One-shot structured channel pruning at initialization.

Channels are scored by the L2 norm of their weight slice, ranked globally
(classifier layer excluded), and the lowest-scoring channels are removed until
the requested sparsity is reached.  The compact network is sliced out of the
original weights, so every surviving parameter is bit-identical to its source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .nets import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    LayerSpec,
    Network,
    NetworkSpec,
    ReLU,
    spec_from_dict,
    spec_to_dict,
)

ChannelScores = list[np.ndarray]
ChannelMask = list[np.ndarray]


@dataclass(frozen=True)
class PrunedTopology:
    """Index maps tying compact channels back to their original positions."""

    compact_spec: NetworkSpec
    kept_out: tuple[tuple[int, ...], ...]
    kept_in: tuple[tuple[int, ...], ...]
    parent_spec: NetworkSpec
    parent_init_seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "kept_out": [list(k) for k in self.kept_out],
                "kept_in": [list(k) for k in self.kept_in],
                "compact_spec": spec_to_dict(self.compact_spec),
                "parent_spec": spec_to_dict(self.parent_spec),
                "parent_init_seed": self.parent_init_seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PrunedTopology":
        d = json.loads(text)
        return cls(
            compact_spec=spec_from_dict(d["compact_spec"]),
            kept_out=tuple(tuple(k) for k in d["kept_out"]),
            kept_in=tuple(tuple(k) for k in d["kept_in"]),
            parent_spec=spec_from_dict(d["parent_spec"]),
            parent_init_seed=d["parent_init_seed"],
        )


def score_channels(net: Network) -> ChannelScores:
    """Per output channel/unit, the L2 norm of its weight slice (biases excluded)."""
    scores = []
    for w, _ in net.params:
        flat = w.reshape(w.shape[0], -1)
        scores.append(np.sqrt((flat * flat).sum(axis=1)))
    return scores


def remove(scores: ChannelScores, p: float) -> ChannelMask:
    """Turn magnitude scores into keep-masks at global sparsity >= p.

    Prunable channels (all layers except the final classifier) are ranked
    ascending by (score, layer, channel) and pruned lowest-first, skipping any
    removal that would empty a layer, until the achieved sparsity first
    reaches p.  The classifier mask is always all-true.
    """
    if not scores:
        raise ValueError("scores are empty")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {p}")
    prunable = scores[:-1]
    total = sum(len(z) for z in prunable)
    if total == 0:
        if p > 0:
            raise ValueError("no prunable channels: maximum achievable sparsity is 0")
        return [np.ones(len(z), dtype=bool) for z in scores]
    max_achievable = (total - len(prunable)) / total
    if p > max_achievable:
        raise ValueError(
            f"sparsity {p} unreachable with one channel kept per layer; "
            f"maximum achievable is {max_achievable:.6f}"
        )
    ranked = sorted(
        (float(z[c]), layer, c) for layer, z in enumerate(prunable) for c in range(len(z))
    )
    mask = [np.ones(len(z), dtype=bool) for z in scores]
    kept = [len(z) for z in prunable]
    pruned = 0
    for _, layer, channel in ranked:
        if pruned / total >= p:
            break
        if kept[layer] == 1:
            continue
        mask[layer][channel] = False
        kept[layer] -= 1
        pruned += 1
    return mask


def achieved_sparsity(mask: ChannelMask) -> float:
    """1 - kept/total over prunable channels (classifier layer excluded)."""
    prunable = mask[:-1]
    total = sum(len(m) for m in prunable)
    if total == 0:
        return 0.0
    kept = sum(int(m.sum()) for m in prunable)
    return 1.0 - kept / total


def mask_to_json(mask: ChannelMask) -> str:
    return json.dumps(
        {"schema_version": 1, "kept": [np.flatnonzero(m).tolist() for m in mask],
         "sizes": [len(m) for m in mask]},
        sort_keys=True,
    )


def mask_from_json(text: str) -> ChannelMask:
    d = json.loads(text)
    mask = []
    for kept, size in zip(d["kept"], d["sizes"]):
        m = np.zeros(size, dtype=bool)
        m[kept] = True
        mask.append(m)
    return mask


def _validate_mask(net: Network, mask: ChannelMask) -> None:
    if len(mask) != len(net.params):
        raise ValueError(f"mask has {len(mask)} layers, network has {len(net.params)}")
    for i, (m, (w, _)) in enumerate(zip(mask, net.params)):
        if len(m) != w.shape[0]:
            raise ValueError(f"layer {i}: mask length {len(m)} != {w.shape[0]} channels")
        if not m.any():
            raise ValueError(f"layer {i}: mask keeps no channels")
    if not mask[-1].all():
        raise ValueError("classifier layer mask must keep all outputs")


def build_pruned(net: Network, mask: ChannelMask) -> tuple[Network, PrunedTopology]:
    """Slice the compact network out of `net` and record the index maps.

    Output channels follow the mask; input coordinates follow the predecessor's
    kept set (expanded blockwise through Flatten, one-to-one through
    GlobalAvgPool/ReLU).  The first parametric layer keeps all raw inputs.
    """
    _validate_mask(net, mask)
    kept_out = [np.flatnonzero(m) for m in mask]
    compact_layers: list[LayerSpec] = []
    kept_in: list[np.ndarray] = []
    new_params: list[tuple[np.ndarray, np.ndarray]] = []
    # carry: (kind, kept original indices, original count) for the stream
    # feeding the next parametric layer; None before the first one.
    carry: tuple[str, np.ndarray, int] | None = None
    p_idx = 0
    for layer in net.spec.layers:
        if isinstance(layer, Dense):
            if carry is None:
                ki = np.arange(layer.in_units)
            elif carry[0] == "flat":
                # The Dense in_units pin the per-channel spatial block size.
                channels, n_channels = carry[1], carry[2]
                block = layer.in_units // n_channels
                ki = (channels[:, None] * block + np.arange(block)[None, :]).ravel()
            else:
                ki = carry[1]
            ko = kept_out[p_idx]
            w, b = net.params[p_idx]
            new_params.append((np.ascontiguousarray(w[np.ix_(ko, ki)]), b[ko].copy()))
            compact_layers.append(Dense(len(ki), len(ko)))
            kept_in.append(ki)
            carry = ("vector", ko, layer.out_units)
            p_idx += 1
        elif isinstance(layer, Conv2D):
            ki = np.arange(layer.in_ch) if carry is None else carry[1]
            ko = kept_out[p_idx]
            w, b = net.params[p_idx]
            new_params.append((np.ascontiguousarray(w[np.ix_(ko, ki)]), b[ko].copy()))
            compact_layers.append(Conv2D(len(ki), len(ko), layer.kernel, layer.stride, layer.pad))
            kept_in.append(ki)
            carry = ("image", ko, layer.out_ch)
            p_idx += 1
        elif isinstance(layer, Flatten):
            if carry is not None and carry[0] == "image":
                carry = ("flat", carry[1], carry[2])
            compact_layers.append(Flatten())
        elif isinstance(layer, GlobalAvgPool):
            if carry is not None:
                carry = ("vector", carry[1], carry[2])
            compact_layers.append(GlobalAvgPool())
        else:
            compact_layers.append(ReLU())
    compact_spec = NetworkSpec(tuple(compact_layers), net.spec.num_classes)
    compact_spec.validate()
    pruned = Network(compact_spec, new_params, net.init_seed)
    topo = PrunedTopology(
        compact_spec=compact_spec,
        kept_out=tuple(tuple(int(i) for i in ko) for ko in kept_out),
        kept_in=tuple(tuple(int(i) for i in ki) for ki in kept_in),
        parent_spec=net.spec,
        parent_init_seed=net.init_seed,
    )
    return pruned, topo
