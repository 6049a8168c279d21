"""Classification losses: cross-entropy, tempered softmax, and the composite
distillation loss, each returning the exact gradient w.r.t. the logits."""

from __future__ import annotations

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    bad = np.flatnonzero((labels < 0) | (labels >= num_classes))
    if bad.size:
        raise ValueError(
            f"label {labels[bad[0]]} at position {bad[0]} outside [0, {num_classes})"
        )
    return labels


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-probability of the true class.

    Returns (loss, dloss/dlogits) with the gradient (softmax - onehot) / batch.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")
    n = logits.shape[0]
    ls = log_softmax(logits)
    loss = -ls[np.arange(n), labels].mean()
    dlogits = np.exp(ls)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return float(loss), dlogits


def softmax_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of logits / temperature."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    shifted = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def kd_composite_loss(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    labels,
    temperature: float,
    lam: float,
) -> tuple[float, np.ndarray]:
    """Weighted blend of hard-label cross-entropy and tempered distillation.

    loss = lam * CE(student, labels)
         + (1 - lam) * T^2 * KL(softmax_T(teacher) || softmax_T(student))

    averaged over the batch; the gradient is taken w.r.t. the student logits
    only.  lam=1 reduces to plain cross-entropy bit-for-bit.
    """
    student_logits = np.asarray(student_logits, dtype=np.float64)
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    if student_logits.shape != teacher_logits.shape:
        raise ValueError(
            f"student logits {student_logits.shape} != teacher logits {teacher_logits.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    ce_loss, ce_grad = cross_entropy(student_logits, labels)
    if lam == 1.0:
        return ce_loss, ce_grad
    n = student_logits.shape[0]
    ls_teacher = log_softmax(teacher_logits / temperature)
    ls_student = log_softmax(student_logits / temperature)
    p = np.exp(ls_teacher)
    q = np.exp(ls_student)
    kl = (p * (ls_teacher - ls_student)).sum(axis=1).mean()
    kd_loss = temperature * temperature * kl
    kd_grad = (temperature / n) * (q - p)
    loss = lam * ce_loss + (1.0 - lam) * kd_loss
    grad = lam * ce_grad + (1.0 - lam) * kd_grad
    return float(loss), grad
