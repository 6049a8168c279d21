"""SGD training loop with optional teacher distillation.

Training is pure: the input network is never mutated and the result is fully
determined by (network, data order, config).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .losses import cross_entropy, kd_composite_loss
from .nets import Network, backward, forward


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float = 0.0
    seed: int = 0
    shuffle_each_epoch: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # lr = 0 is a legal degenerate config: training becomes the identity.
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


def sgd_step(
    net: Network,
    grads: list[tuple[np.ndarray, np.ndarray]],
    velocity: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
    momentum: float,
) -> tuple[Network, list[tuple[np.ndarray, np.ndarray]]]:
    """v <- momentum*v + g; w <- w - lr*v.  Returns fresh arrays."""
    if len(grads) != len(net.params) or len(velocity) != len(net.params):
        raise ValueError("gradient/velocity structure does not match parameters")
    new_params = []
    new_velocity = []
    for (w, b), (gw, gb), (vw, vb) in zip(net.params, grads, velocity):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ValueError(f"gradient shape {gw.shape} does not match weight {w.shape}")
        vw2 = momentum * vw + gw
        vb2 = momentum * vb + gb
        new_params.append((w - lr * vw2, b - lr * vb2))
        new_velocity.append((vw2, vb2))
    return Network(net.spec, new_params, net.init_seed), new_velocity


def predict_logits(net: Network, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Forward pass in chunks; per-row results are independent of chunking."""
    outs = [forward(net, inputs[i:i + batch_size])[0] for i in range(0, len(inputs), batch_size)]
    return np.concatenate(outs, axis=0)


def accuracy(net: Network, inputs: np.ndarray, labels: np.ndarray, batch_size: int = 512) -> float:
    """Fraction of argmax predictions matching labels; argmax ties go to the lowest class."""
    logits = predict_logits(net, inputs, batch_size)
    return float((logits.argmax(axis=1) == np.asarray(labels)).mean())


def train(
    net: Network,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    teacher: Network | None = None,
    kd: tuple[float, float] | None = None,
) -> tuple[Network, dict[str, list[float]]]:
    """SGD-train a copy of `net`; returns the trained network and per-epoch history.

    With a teacher, updates are driven by the composite distillation loss with
    kd=(temperature, lam); the teacher is read-only.  History holds the mean
    sample loss and the post-epoch training accuracy for each epoch.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0:
        raise ValueError("training set is empty")
    if inputs.shape[0] != n:
        raise ValueError(f"{inputs.shape[0]} inputs for {n} labels")
    if teacher is not None:
        if kd is None:
            raise ValueError("teacher given without kd=(temperature, lam)")
        if teacher.spec.num_classes != net.spec.num_classes:
            raise ValueError(
                f"teacher emits {teacher.spec.num_classes} classes, "
                f"student emits {net.spec.num_classes}"
            )
    rng = np.random.default_rng(cfg.seed)
    model = net.copy()
    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.params]
    history: dict[str, list[float]] = {"loss": [], "accuracy": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle_each_epoch else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = inputs[idx], labels[idx]
            logits, cache = forward(model, xb)
            if teacher is not None:
                t_logits, _ = forward(teacher, xb)
                loss, dlogits = kd_composite_loss(logits, t_logits, yb, kd[0], kd[1])
            else:
                loss, dlogits = cross_entropy(logits, yb)
            grads = backward(model, cache, dlogits)
            model, velocity = sgd_step(model, grads, velocity, cfg.learning_rate, cfg.momentum)
            epoch_loss += loss * len(idx)
        history["loss"].append(epoch_loss / n)
        history["accuracy"].append(accuracy(model, inputs, labels))
    return model, history
