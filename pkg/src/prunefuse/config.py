"""Experiment configuration: dataclasses plus TOML loading.

The config file is flat key/value TOML with nested sections for the three
training phases; see configs/ for annotated examples.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .alcycle import METRICS
from .dataio import Dataset, gen_blobs, load_idx, split
from .nets import Conv2D, Dense, Flatten, GlobalAvgPool, NetworkSpec, ReLU
from .training import TrainConfig

MODES = ("prunefuse", "baseline_al", "no_fusion_ablation", "full_data_reference")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    # blobs
    n: int = 1000
    classes: int = 3
    dim: int = 8
    spread: float = 1.0
    seed: int = 0
    train_frac: float = 0.8
    # idx
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class NetworkConfig:
    kind: str = "mlp"
    hidden: tuple[int, ...] = (16,)
    # conv
    channels: tuple[int, ...] = (8, 8)
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    image_side: int = 4
    head: str = "gap"


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    shuffle: bool = True

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=int(seed),
            shuffle_each_epoch=self.shuffle,
        )


@dataclass(frozen=True)
class KdConfig:
    enabled: bool = True
    temperature: float = 4.0
    lam: float = 0.9


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    p: float
    b: float
    metric: str
    seeds: tuple[int, ...]
    output_dir: str
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    kd: KdConfig = field(default_factory=KdConfig)
    selector_train: TrainSection = field(default_factory=TrainSection)
    fused_train: TrainSection = field(default_factory=TrainSection)
    baseline_train: TrainSection = field(default_factory=TrainSection)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode {self.mode!r} not in {MODES}")
        if self.metric not in METRICS:
            raise ValueError(f"metric {self.metric!r} not in {METRICS}")
        if self.mode in ("prunefuse", "no_fusion_ablation"):
            if not self.p > 0:
                raise ValueError(f"mode {self.mode} requires p > 0, got {self.p}")
        else:
            if self.p != 0:
                raise ValueError(f"mode {self.mode} requires p = 0, got {self.p}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must be in [0, 1), got {self.p}")
        if not 0.0 < self.b <= 1.0:
            raise ValueError(f"b must be in (0, 1], got {self.b}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.dataset.kind not in ("blobs", "idx"):
            raise ValueError(f"dataset kind {self.dataset.kind!r} not in ('blobs', 'idx')")
        if self.network.kind not in ("mlp", "conv"):
            raise ValueError(f"network kind {self.network.kind!r} not in ('mlp', 'conv')")


def load_config(path: str, seed_override: int | None = None,
                out_override: str | None = None) -> ExperimentConfig:
    """Read a TOML experiment config, with optional seed/output overrides."""
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    exp = raw.get("experiment", {})
    train = raw.get("train", {})
    cfg = ExperimentConfig(
        mode=exp.get("mode", "prunefuse"),
        p=float(exp.get("p", 0.5)),
        b=float(exp.get("b", 0.3)),
        metric=exp.get("metric", "lc"),
        seeds=tuple(int(s) for s in exp.get("seeds", [0])),
        output_dir=exp.get("output_dir", "runs"),
        dataset=_dataset_config(raw.get("dataset", {})),
        network=_network_config(raw.get("network", {})),
        kd=KdConfig(**raw.get("kd", {})),
        selector_train=TrainSection(**train.get("selector", {})),
        fused_train=TrainSection(**train.get("fused", {})),
        baseline_train=TrainSection(**train.get("baseline", {})),
    )
    if seed_override is not None:
        cfg = replace(cfg, seeds=(int(seed_override),))
    if out_override is not None:
        cfg = replace(cfg, output_dir=out_override)
    cfg.validate()
    return cfg


def _dataset_config(d: dict) -> DatasetConfig:
    return DatasetConfig(**{k: (float(v) if k in ("spread", "train_frac") else v)
                            for k, v in d.items()})


def _network_config(d: dict) -> NetworkConfig:
    d = dict(d)
    if "hidden" in d:
        d["hidden"] = tuple(int(h) for h in d["hidden"])
    if "channels" in d:
        d["channels"] = tuple(int(c) for c in d["channels"])
    return NetworkConfig(**d)


def prepare_dataset(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Load or generate the dataset and shape its inputs for the network kind."""
    ds = cfg.dataset
    if ds.kind == "blobs":
        full = gen_blobs(ds.n, ds.classes, ds.dim, ds.spread, ds.seed)
        train_ds, test_ds = split(full, ds.train_frac, seed=ds.seed + 1)
    else:
        train_ds = load_idx(ds.train_images, ds.train_labels)
        test_ds = load_idx(ds.test_images, ds.test_labels)
        classes = max(train_ds.num_classes, test_ds.num_classes)
        train_ds = Dataset(train_ds.inputs, train_ds.labels, classes, train_ds.name)
        test_ds = Dataset(test_ds.inputs, test_ds.labels, classes, test_ds.name)
    return _shape_for_network(train_ds, cfg.network), _shape_for_network(test_ds, cfg.network)


def _shape_for_network(dataset: Dataset, net: NetworkConfig) -> Dataset:
    x = dataset.inputs
    if net.kind == "conv":
        side = net.image_side
        if x.ndim == 2:
            if x.shape[1] != side * side:
                raise ValueError(
                    f"conv network with image_side {side} needs {side * side} features, "
                    f"dataset has {x.shape[1]}"
                )
            x = x.reshape(len(x), 1, side, side)
        elif x.ndim != 4:
            raise ValueError(f"conv network needs (n, c, h, w) inputs, got shape {x.shape}")
    else:
        if x.ndim != 2:
            x = x.reshape(len(x), -1)
    return Dataset(x, dataset.labels, dataset.num_classes, dataset.name)


def build_network_spec(cfg: ExperimentConfig, dataset: Dataset) -> NetworkSpec:
    """Construct the dense network spec for the configured architecture."""
    net = cfg.network
    classes = dataset.num_classes
    if net.kind == "mlp":
        in_units = dataset.inputs.shape[1]
        layers = []
        for h in net.hidden:
            layers += [Dense(in_units, h), ReLU()]
            in_units = h
        layers.append(Dense(in_units, classes))
        spec = NetworkSpec(tuple(layers), classes)
    else:
        in_ch = dataset.inputs.shape[1]
        h = w = net.image_side
        layers = []
        for c in net.channels:
            layers += [Conv2D(in_ch, c, net.kernel, net.stride, net.pad), ReLU()]
            h = (h + 2 * net.pad - net.kernel) // net.stride + 1
            w = (w + 2 * net.pad - net.kernel) // net.stride + 1
            in_ch = c
        if net.head == "gap":
            layers += [GlobalAvgPool(), Dense(in_ch, classes)]
        elif net.head == "flatten":
            layers += [Flatten(), Dense(in_ch * h * w, classes)]
        else:
            raise ValueError(f"unknown conv head {net.head!r}")
        spec = NetworkSpec(tuple(layers), classes)
    spec.validate()
    return spec


def network_descriptor(spec: NetworkSpec) -> str:
    parts = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            parts.append(f"d{layer.in_units}x{layer.out_units}")
        elif isinstance(layer, Conv2D):
            parts.append(f"c{layer.in_ch}x{layer.out_ch}k{layer.kernel}s{layer.stride}p{layer.pad}")
        elif isinstance(layer, ReLU):
            parts.append("r")
        elif isinstance(layer, Flatten):
            parts.append("f")
        else:
            parts.append("g")
    return "-".join(parts)
