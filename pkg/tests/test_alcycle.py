import numpy as np
import pytest

from helpers import params_equal
from prunefuse.alcycle import BudgetSchedule, make_schedule, run_selection_loop
from prunefuse.dataio import gen_blobs
from prunefuse.nets import Dense, NetworkSpec, ReLU
from prunefuse.training import TrainConfig

SPEC = NetworkSpec((Dense(4, 10), ReLU(), Dense(10, 8), ReLU(), Dense(8, 2)), 2)
FAST = TrainConfig(epochs=4, batch_size=32, learning_rate=0.1, momentum=0.9, seed=0)


def blob_pool(n=300, spread=1.0, seed=0):
    return gen_blobs(n=n, classes=2, dim=4, spread=spread, seed=seed)


class TestMakeSchedule:
    def test_reference_growth(self):
        assert make_schedule(1000, 0.3).cumulative_sizes == (20, 100, 200, 300)

    def test_small_pool(self):
        assert make_schedule(100, 0.10).cumulative_sizes == (2, 10)

    def test_budget_equals_initial(self):
        assert make_schedule(1000, 0.02).cumulative_sizes == (20,)

    def test_clip_to_budget(self):
        assert make_schedule(100, 0.05).cumulative_sizes == (2, 5)

    def test_budget_below_initial_rejected(self):
        with pytest.raises(ValueError, match="below the initial"):
            make_schedule(1000, 0.01)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError, match="n >= 50"):
            make_schedule(30, 0.5)

    def test_no_float_flooring_artifacts(self):
        # 0.3 * 1000 and friends must not floor one short
        for n in (100, 1000, 60000):
            for b in (0.1, 0.2, 0.3, 0.4, 0.5):
                sizes = make_schedule(n, b).cumulative_sizes
                assert sizes[-1] == round(b * n)

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            BudgetSchedule((10, 10))


class TestSelectionLoop:
    def test_degenerate_schedule_trains_once(self):
        data = blob_pool()
        res = run_selection_loop(
            data, SPEC, 0.5, "lc", make_schedule(data.n, 0.02), FAST, master_seed=1
        )
        assert len(res.rounds) == 1
        assert len(res.pool.labeled) == 6
        assert res.oracle.queries == 6

    def test_random_to_full_budget_exhausts_pool(self):
        data = blob_pool(n=100)
        res = run_selection_loop(
            data, SPEC, 0.5, "random", make_schedule(data.n, 1.0), FAST, master_seed=2
        )
        assert len(res.pool.labeled) == data.n
        assert res.pool.unlabeled == ()

    def test_deterministic_across_runs(self):
        data = blob_pool()
        kwargs = dict(p=0.5, metric="entropy", schedule=make_schedule(data.n, 0.2),
                      train_cfg=FAST, master_seed=3)
        a = run_selection_loop(data, SPEC, **kwargs)
        b = run_selection_loop(data, SPEC, **kwargs)
        assert a.pool.labeled == b.pool.labeled
        assert params_equal(a.selector, b.selector)
        assert [r.to_dict() for r in a.rounds] == [r.to_dict() for r in b.rounds]

    @pytest.mark.parametrize("metric", ["lc", "entropy", "kcenters", "random"])
    def test_pool_conservation_and_growth(self, metric):
        data = blob_pool()
        schedule = make_schedule(data.n, 0.2)
        res = run_selection_loop(data, SPEC, 0.5, metric, schedule, FAST, master_seed=4)
        assert len(res.pool.labeled) + len(res.pool.unlabeled) == data.n
        assert not set(res.pool.labeled) & set(res.pool.unlabeled)
        assert len(res.pool.labeled) == schedule.cumulative_sizes[-1]
        assert [r.labeled_size for r in res.rounds] == list(schedule.cumulative_sizes)
        assert res.oracle.queries == len(res.pool.labeled)

    def test_fresh_start_weights_unchanged(self):
        data = blob_pool()
        res = run_selection_loop(
            data, SPEC, 0.5, "lc", make_schedule(data.n, 0.2), FAST, master_seed=5
        )
        # pruned_init must still hold the exact build_pruned weights
        from prunefuse.pruning import build_pruned, remove, score_channels

        mask = remove(score_channels(res.theta_init), 0.5)
        reference, _ = build_pruned(res.theta_init, mask)
        assert params_equal(res.pruned_init, reference)
        assert not params_equal(res.selector, res.pruned_init)

    def test_schedule_exceeding_dataset_rejected(self):
        data = blob_pool(n=60)
        schedule = BudgetSchedule((10, 100))
        with pytest.raises(ValueError, match="dataset has"):
            run_selection_loop(data, SPEC, 0.5, "lc", schedule, FAST, master_seed=0)

    def test_unreachable_sparsity_labeled_as_pruning_stage(self):
        data = blob_pool()
        with pytest.raises(ValueError, match="pruning stage"):
            run_selection_loop(
                data, SPEC, 0.97, "lc", make_schedule(data.n, 0.1), FAST, master_seed=0
            )

    def test_unknown_metric_rejected(self):
        data = blob_pool()
        with pytest.raises(ValueError, match="metric"):
            run_selection_loop(
                data, SPEC, 0.5, "margin", make_schedule(data.n, 0.1), FAST, master_seed=0
            )


def test_lc_concentrates_near_boundary():
    # For two overlapping blobs the true boundary is the midplane between the
    # class means; LC picks should sit closer to it than random picks.
    means = np.zeros((2, 4))
    means[0, 0] = 2.0
    means[1, 1] = 2.0
    normal = means[1] - means[0]
    midpoint = means.mean(axis=0)

    def boundary_distance(points):
        return np.abs((points - midpoint) @ normal) / np.linalg.norm(normal)

    cfg = TrainConfig(epochs=15, batch_size=32, learning_rate=0.1, momentum=0.9, seed=0)
    lc_dists, rnd_dists = [], []
    for seed in range(5):
        data = blob_pool(n=400, spread=1.0, seed=seed)
        schedule = make_schedule(data.n, 0.2)
        for metric, out in (("lc", lc_dists), ("random", rnd_dists)):
            res = run_selection_loop(
                data, SPEC, 0.5, metric, schedule, cfg, master_seed=100 + seed
            )
            initial = set(
                run_selection_loop(
                    data, SPEC, 0.5, metric, BudgetSchedule(schedule.cumulative_sizes[:1]),
                    cfg, master_seed=100 + seed,
                ).pool.labeled
            )
            picked = [i for i in res.pool.labeled if i not in initial]
            out.append(boundary_distance(data.inputs[picked]).mean())
    assert np.mean(lc_dists) < np.mean(rnd_dists)
