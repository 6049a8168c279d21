"""Weight fusion: transplant the trained compact network into its original
coordinates inside the untrained dense network, then fine-tune with optional
distillation from the compact teacher."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .nets import Network
from .pruning import PrunedTopology
from .training import TrainConfig, train


@dataclass(frozen=True)
class LayerFusion:
    layer: int
    transplanted: int
    retained: int


@dataclass(frozen=True)
class FusionReport:
    """Per-layer transplant accounting plus a checksum of the moved values."""

    layers: tuple[LayerFusion, ...]
    checksum: str

    @property
    def transplanted_total(self) -> int:
        return sum(l.transplanted for l in self.layers)

    @property
    def retained_total(self) -> int:
        return sum(l.retained for l in self.layers)

    def to_json_dict(self) -> dict:
        return {
            "layers": [
                {"layer": l.layer, "transplanted": l.transplanted, "retained": l.retained}
                for l in self.layers
            ],
            "checksum": self.checksum,
            "transplanted_total": self.transplanted_total,
            "retained_total": self.retained_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def fuse(
    theta_init: Network,
    theta_p_star: Network,
    topo: PrunedTopology,
) -> tuple[Network, FusionReport]:
    """Copy trained compact weights into their original coordinates.

    Every surviving (out, in) coordinate pair of a layer receives the trained
    value bit-for-bit; all other coordinates keep the untrained init values.
    Inputs are left unmodified.
    """
    if theta_init.init_seed != topo.parent_init_seed:
        raise ValueError(
            f"init network seed {theta_init.init_seed} does not match the topology's "
            f"parent seed {topo.parent_init_seed}"
        )
    _check_specs(theta_init.spec, topo.parent_spec, "dense network vs topology parent")
    _check_specs(theta_p_star.spec, topo.compact_spec, "compact network vs topology")
    fused_params = []
    layer_reports = []
    digest = hashlib.sha256()
    for l, ((w0, b0), (wp, bp)) in enumerate(zip(theta_init.params, theta_p_star.params)):
        ko = np.asarray(topo.kept_out[l], dtype=np.int64)
        ki = np.asarray(topo.kept_in[l], dtype=np.int64)
        if wp.shape[0] != len(ko) or wp.shape[1] != len(ki):
            raise ValueError(
                f"layer {l}: compact weights {wp.shape} do not match kept "
                f"({len(ko)}, {len(ki)})"
            )
        w = w0.copy()
        b = b0.copy()
        w[np.ix_(ko, ki)] = wp
        b[ko] = bp
        fused_params.append((w, b))
        transplanted = wp.size + bp.size
        layer_reports.append(LayerFusion(l, transplanted, (w.size + b.size) - transplanted))
        digest.update(np.ascontiguousarray(wp).tobytes())
        digest.update(np.ascontiguousarray(bp).tobytes())
    theta_f = Network(theta_init.spec, fused_params, theta_init.init_seed)
    return theta_f, FusionReport(tuple(layer_reports), digest.hexdigest())


def _check_specs(actual, expected, what: str) -> None:
    if actual.num_classes != expected.num_classes:
        raise ValueError(f"{what}: class counts differ ({actual.num_classes} vs {expected.num_classes})")
    if len(actual.layers) != len(expected.layers):
        raise ValueError(f"{what}: layer counts differ ({len(actual.layers)} vs {len(expected.layers)})")
    for i, (a, e) in enumerate(zip(actual.layers, expected.layers)):
        if a != e:
            raise ValueError(f"{what}: layer {i} differs ({a} vs {e})")


def finetune_fused(
    theta_f: Network,
    teacher: Network,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    temperature: float,
    lam: float,
) -> tuple[Network, dict[str, list[float]]]:
    """Fine-tune the fused network against hard labels and the teacher's
    tempered outputs; the teacher is never modified."""
    return train(theta_f, inputs, labels, cfg, teacher=teacher, kd=(temperature, lam))
