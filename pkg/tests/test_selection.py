import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from prunefuse.selection import (
    PoolState,
    ScoreVector,
    greedy_k_centers,
    random_select,
    score_entropy,
    score_least_confidence,
    top_k,
)


def brute_force_greedy(points, labeled, indices, k):
    """O(n^2 k) reference: fresh min-over-centers each step."""
    centers = [np.asarray(c) for c in labeled]
    picked_rows = set()
    picks = []
    for _ in range(k):
        best_row, best_dist = None, None
        for row in range(len(points)):
            if row in picked_rows:
                continue
            if centers:
                dist = min(math.sqrt(((points[row] - c) ** 2).sum()) for c in centers)
            else:
                dist = math.inf
            better = best_dist is None or dist > best_dist
            tie = best_dist is not None and dist == best_dist and indices[row] < indices[best_row]
            if better or tie:
                best_row, best_dist = row, dist
        picks.append(int(indices[best_row]))
        picked_rows.add(best_row)
        centers.append(points[best_row])
    return picks


class TestPoolState:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            PoolState(labeled=(0, 1), unlabeled=(1, 2))

    def test_coverage_rejected(self):
        with pytest.raises(ValueError, match="cover"):
            PoolState(labeled=(0,), unlabeled=(2,))

    def test_acquire_moves_indices(self):
        pool = PoolState.initial(5).acquire([3, 1])
        assert pool.labeled == (1, 3)
        assert pool.unlabeled == (0, 2, 4)

    def test_acquire_rejects_labeled(self):
        pool = PoolState.initial(4).acquire([0])
        with pytest.raises(ValueError, match="not in the unlabeled"):
            pool.acquire([0])


class TestScores:
    def test_lc_uniform(self):
        probs = np.full((1, 10), 0.1)
        assert score_least_confidence(probs).scores[0] == pytest.approx(0.9)

    def test_lc_one_hot(self):
        probs = np.array([[0.0, 1.0, 0.0]])
        assert score_least_confidence(probs).scores[0] == 0.0

    def test_lc_max(self):
        probs = np.array([[0.5, 0.3, 0.2]])
        assert score_least_confidence(probs).scores[0] == 0.5

    def test_entropy_one_hot(self):
        assert score_entropy(np.array([[1.0, 0.0]])).scores[0] == 0.0

    def test_entropy_uniform(self):
        probs = np.full((1, 4), 0.25)
        assert score_entropy(probs).scores[0] == pytest.approx(math.log(4))

    def test_entropy_half_half(self):
        probs = np.array([[0.5, 0.5, 0.0, 0.0]])
        assert score_entropy(probs).scores[0] == pytest.approx(math.log(2))

    def test_unnormalized_rejected(self):
        for scorer in (score_least_confidence, score_entropy):
            with pytest.raises(ValueError, match="row 0"):
                scorer(np.array([[0.5, 0.6]]))


class TestTopK:
    def test_tie_break_by_index(self):
        sv = ScoreVector(np.array([0, 1, 2, 3]), np.array([0.2, 0.9, 0.9, 0.1]))
        assert top_k(sv, 2) == [1, 2]

    def test_k_zero(self):
        sv = ScoreVector(np.array([0, 1]), np.array([0.5, 0.6]))
        assert top_k(sv, 0) == []

    def test_k_full(self):
        sv = ScoreVector(np.array([4, 2, 7]), np.array([0.1, 0.9, 0.5]))
        assert set(top_k(sv, 3)) == {2, 4, 7}

    def test_out_of_range_rejected(self):
        sv = ScoreVector(np.array([0]), np.array([0.5]))
        with pytest.raises(ValueError, match="out of range"):
            top_k(sv, 2)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 1000.0))
    @settings(max_examples=40, deadline=None)
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 20))
        sv = ScoreVector(np.arange(n), rng.uniform(0, 1, size=n))
        scaled = ScoreVector(sv.indices, sv.scores * c)
        k = int(rng.integers(0, n + 1))
        assert top_k(sv, k) == top_k(scaled, k)


class TestGreedyKCenters:
    def test_one_dimensional_trace(self):
        labeled = np.array([[0.0]])
        unlabeled = np.array([[1.0], [2.0], [10.0]])
        picks = greedy_k_centers(unlabeled, labeled, [0, 1, 2], 2)
        assert picks == [2, 1]

    def test_k_zero(self):
        assert greedy_k_centers(np.zeros((3, 2)), np.zeros((0, 2)), [0, 1, 2], 0) == []

    def test_empty_labeled_starts_at_lowest_index(self):
        unlabeled = np.array([[5.0], [1.0], [3.0]])
        picks = greedy_k_centers(unlabeled, np.zeros((0, 1)), [10, 11, 12], 1)
        assert picks == [10]

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dims differ"):
            greedy_k_centers(np.zeros((2, 3)), np.zeros((1, 2)), [0, 1], 1)

    def test_k_too_large_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            greedy_k_centers(np.zeros((2, 2)), np.zeros((0, 2)), [0, 1], 3)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(10, 50)), int(rng.integers(1, 5))
        n_lab = int(rng.integers(0, 4))
        points = rng.normal(size=(n, d))
        labeled = rng.normal(size=(n_lab, d))
        indices = rng.permutation(1000)[:n]
        k = int(rng.integers(1, 6))
        assert greedy_k_centers(points, labeled, indices, k) == brute_force_greedy(
            points, labeled, indices, k
        )

    @pytest.mark.parametrize("seed", range(4))
    def test_two_approximation(self, seed):
        # greedy max-min radius is within 2x of the optimal k-center radius
        rng = np.random.default_rng(50 + seed)
        n, k = int(rng.integers(6, 12)), int(rng.integers(1, 4))
        points = rng.normal(size=(n, 2))
        picks = greedy_k_centers(points, np.zeros((0, 2)), np.arange(n), k)
        rows = [int(np.flatnonzero(np.arange(n) == p)[0]) for p in picks]

        def radius(center_rows):
            return max(
                min(math.sqrt(((points[i] - points[c]) ** 2).sum()) for c in center_rows)
                for i in range(n)
            )

        greedy_radius = radius(rows)
        optimal = min(radius(list(combo)) for combo in itertools.combinations(range(n), k))
        assert greedy_radius <= 2.0 * optimal + 1e-12


class TestRandomSelect:
    def test_deterministic(self):
        pool = PoolState.initial(20)
        assert random_select(pool, 5, seed=3) == random_select(pool, 5, seed=3)

    def test_full_draw_is_permutation(self):
        pool = PoolState.initial(10)
        picks = random_select(pool, 10, seed=1)
        assert sorted(picks) == list(range(10))

    def test_disjoint_from_labeled(self):
        pool = PoolState.initial(10).acquire([0, 1, 2])
        picks = random_select(pool, 4, seed=2)
        assert not set(picks) & set(pool.labeled)

    def test_k_too_large_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            random_select(PoolState.initial(3), 4, seed=0)


class TestCrossMetricProperties:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_binary_lc_entropy_same_ranking(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 15))
        p = rng.uniform(0.01, 0.99, size=n)
        gaps = np.abs(np.subtract.outer(np.maximum(p, 1 - p), np.maximum(p, 1 - p)))
        assume((gaps[~np.eye(n, dtype=bool)] > 1e-9).all())
        probs = np.stack([p, 1.0 - p], axis=1)
        lc = score_least_confidence(probs)
        ent = score_entropy(probs)
        assert top_k(lc, n) == top_k(ent, n)
