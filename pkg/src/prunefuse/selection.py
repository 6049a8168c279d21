"""Acquisition scoring and subset selection over an unlabeled pool.

All tie-breaking is by ascending dataset index so selections are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PoolState:
    """Disjoint labeled/unlabeled index sets covering the full dataset range."""

    labeled: tuple[int, ...]
    unlabeled: tuple[int, ...]

    def __post_init__(self):
        lab, unl = set(self.labeled), set(self.unlabeled)
        if lab & unl:
            raise ValueError(f"labeled and unlabeled overlap: {sorted(lab & unl)[:5]}")
        n = len(lab) + len(unl)
        if lab | unl != set(range(n)):
            raise ValueError("labeled + unlabeled must cover exactly range(n)")
        object.__setattr__(self, "labeled", tuple(sorted(self.labeled)))
        object.__setattr__(self, "unlabeled", tuple(sorted(self.unlabeled)))

    @classmethod
    def initial(cls, n: int) -> "PoolState":
        return cls(labeled=(), unlabeled=tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    def acquire(self, indices) -> "PoolState":
        """Move indices from the unlabeled pool to the labeled set."""
        picked = [int(i) for i in indices]
        unl = set(self.unlabeled)
        for i in picked:
            if i not in unl:
                raise ValueError(f"index {i} is not in the unlabeled pool")
            unl.remove(i)
        return PoolState(labeled=self.labeled + tuple(picked), unlabeled=tuple(unl))


@dataclass(frozen=True)
class ScoreVector:
    """Parallel (dataset index, score) arrays."""

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        sc = np.asarray(self.scores, dtype=np.float64)
        if idx.shape != sc.shape or idx.ndim != 1:
            raise ValueError(f"indices {idx.shape} and scores {sc.shape} must be parallel 1-d")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("dataset indices must be unique")
        if not np.isfinite(sc).all():
            raise ValueError("scores must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)

    def __len__(self) -> int:
        return len(self.indices)


def _check_rows_normalized(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"probabilities must be 2-d, got shape {probs.shape}")
    sums = probs.sum(axis=1)
    bad = np.flatnonzero(~np.isfinite(sums) | (np.abs(sums - 1.0) > 1e-6))
    if bad.size:
        raise ValueError(f"row {bad[0]} is not a probability distribution (sum {sums[bad[0]]})")
    return probs


def _default_indices(probs: np.ndarray, indices) -> np.ndarray:
    if indices is None:
        return np.arange(probs.shape[0], dtype=np.int64)
    return np.asarray(indices, dtype=np.int64)


def score_least_confidence(probs: np.ndarray, indices=None) -> ScoreVector:
    """1 - max class probability per row."""
    probs = _check_rows_normalized(probs)
    return ScoreVector(_default_indices(probs, indices), 1.0 - probs.max(axis=1))


def score_entropy(probs: np.ndarray, indices=None) -> ScoreVector:
    """Shannon entropy (natural log) per row, with 0*log(0) = 0.

    Accumulates class terms sequentially so results agree bit-for-bit with a
    plain left-to-right reference sum.
    """
    probs = _check_rows_normalized(probs)
    ent = np.zeros(probs.shape[0])
    for j in range(probs.shape[1]):
        col = probs[:, j]
        logs = np.zeros_like(col)
        np.log(col, out=logs, where=col > 0)
        ent -= col * logs
    return ScoreVector(_default_indices(probs, indices), ent)


def top_k(scores: ScoreVector, k: int) -> list[int]:
    """The k indices with highest score, ordered (descending score, ascending index)."""
    if not 0 <= k <= len(scores):
        raise ValueError(f"k={k} out of range [0, {len(scores)}]")
    order = np.lexsort((scores.indices, -scores.scores))
    return [int(i) for i in scores.indices[order[:k]]]


def greedy_k_centers(
    unlabeled_emb: np.ndarray,
    labeled_emb: np.ndarray,
    unlabeled_indices,
    k: int,
) -> list[int]:
    """Farthest-point selection of k unlabeled points in embedding space.

    Centers start as the labeled embeddings (an empty labeled set means the
    first pick is the lowest-index unlabeled point); each step picks the
    unlabeled point whose Euclidean distance to its nearest center is largest,
    ties broken by lower dataset index, and adds it to the centers.
    """
    u = np.asarray(unlabeled_emb, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError(f"unlabeled embeddings must be 2-d, got shape {u.shape}")
    l = np.asarray(labeled_emb, dtype=np.float64)
    if l.size == 0:
        l = np.zeros((0, u.shape[1]))
    elif l.ndim != 2 or l.shape[1] != u.shape[1]:
        raise ValueError(f"embedding dims differ: unlabeled {u.shape[1]}, labeled {l.shape}")
    idx = np.asarray(unlabeled_indices, dtype=np.int64)
    if len(idx) != len(u):
        raise ValueError(f"{len(idx)} indices for {len(u)} embeddings")
    if not 0 <= k <= len(u):
        raise ValueError(f"k={k} out of range [0, {len(u)}]")
    min_dist = np.full(len(u), np.inf)
    for center in l:
        d = np.sqrt(((u - center) ** 2).sum(axis=1))
        min_dist = np.minimum(min_dist, d)
    picks: list[int] = []
    available = np.ones(len(u), dtype=bool)
    for _ in range(k):
        best = min_dist[available].max()
        candidates = np.flatnonzero(available & (min_dist == best))
        row = candidates[np.argmin(idx[candidates])]
        picks.append(int(idx[row]))
        available[row] = False
        d = np.sqrt(((u - u[row]) ** 2).sum(axis=1))
        min_dist = np.minimum(min_dist, d)
    return picks


def random_select(pool: PoolState, k: int, seed: int) -> list[int]:
    """k distinct unlabeled indices via a seeded partial Fisher-Yates shuffle."""
    arr = list(pool.unlabeled)
    n = len(arr)
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range [0, {n}]")
    rng = np.random.default_rng(seed)
    for i in range(k):
        j = i + int(rng.integers(0, n - i))
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k]
