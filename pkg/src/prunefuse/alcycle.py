"""The iterative selection loop: a pruned surrogate is retrained from scratch
each round on the labeled set, scores the unlabeled pool, and the top picks
are annotated until the budget schedule is exhausted."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import Dataset, LabelOracle
from .nets import Network, NetworkSpec, forward_flops, init_network, penultimate_embeddings, training_flops
from .pruning import PrunedTopology, build_pruned, remove, score_channels
from .selection import (
    PoolState,
    greedy_k_centers,
    random_select,
    score_entropy,
    score_least_confidence,
    top_k,
)
from .training import TrainConfig, accuracy, predict_logits, train

METRICS = ("lc", "entropy", "kcenters", "random")

INITIAL_FRACTION = 0.02
FIRST_INCREMENT = 0.08
LATER_INCREMENT = 0.10


@dataclass(frozen=True)
class BudgetSchedule:
    """Cumulative labeled-set sizes per round, ending at the label budget."""

    cumulative_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.cumulative_sizes)
        if not sizes or sizes[0] < 1:
            raise ValueError(f"schedule must start with a positive size, got {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"schedule must be strictly increasing, got {sizes}")
        object.__setattr__(self, "cumulative_sizes", sizes)

    def __len__(self) -> int:
        return len(self.cumulative_sizes)


def _floor_frac(frac: float, n: int) -> int:
    # Nudge by 1e-9 so products like 0.3 * 1000 floor to 300, not 299.
    return int(math.floor(frac * n + 1e-9))


def make_schedule(n: int, budget_fraction: float) -> BudgetSchedule:
    """Cumulative sizes [2%, 2%+8%, +10%, ...] of n, clipped at the budget."""
    if n < 50:
        raise ValueError(f"need n >= 50 so the 2% initial set is nonempty, got {n}")
    if not 0.0 < budget_fraction <= 1.0:
        raise ValueError(f"budget fraction must be in (0, 1], got {budget_fraction}")
    first = max(1, _floor_frac(INITIAL_FRACTION, n))
    cap = _floor_frac(budget_fraction, n)
    if cap < first:
        raise ValueError(
            f"budget {budget_fraction} yields {cap} labels, below the initial {first}"
        )
    sizes = [first]
    increment = FIRST_INCREMENT
    while sizes[-1] < cap:
        sizes.append(min(sizes[-1] + _floor_frac(increment, n), cap))
        increment = LATER_INCREMENT
    return BudgetSchedule(tuple(sizes))


@dataclass
class RoundRecord:
    round: int
    labeled_size: int
    selector_val_accuracy: float
    selection_metric: str
    flops_this_round: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "labeled_size": self.labeled_size,
            "selector_val_accuracy": self.selector_val_accuracy,
            "selection_metric": self.selection_metric,
            "flops_this_round": self.flops_this_round,
        }


@dataclass
class SelectionLoopResult:
    pool: PoolState
    selector: Network
    topo: PrunedTopology
    rounds: list[RoundRecord]
    theta_init: Network
    pruned_init: Network
    oracle: LabelOracle


def _labeled_arrays(dataset: Dataset, pool: PoolState, label_map: dict[int, int]):
    idx = list(pool.labeled)
    x = dataset.inputs[idx]
    y = np.array([label_map[i] for i in idx], dtype=np.int64)
    return x, y


def run_selection_loop(
    dataset: Dataset,
    spec: NetworkSpec,
    p: float,
    metric: str,
    schedule: BudgetSchedule,
    train_cfg: TrainConfig,
    master_seed: int,
    val_data: Dataset | None = None,
    oracle: LabelOracle | None = None,
) -> SelectionLoopResult:
    """Run the full selection loop and return the trained surrogate.

    The dense network is initialized once from the master seed and pruned once;
    every round retrains the surrogate from its pruned-init weights on the
    current labeled set, scores the pool (random selection skips scoring), and
    acquires the next schedule increment.  After the last acquisition the
    surrogate is trained a final time on the complete labeled set.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    sizes = schedule.cumulative_sizes
    if sizes[-1] > dataset.n:
        raise ValueError(f"schedule ends at {sizes[-1]} but the dataset has {dataset.n} samples")
    input_shape = dataset.inputs.shape[1:]

    plan = np.random.default_rng(master_seed)
    init_seed = int(plan.integers(2**62))
    pool_seed = int(plan.integers(2**62))
    train_seeds = [int(plan.integers(2**62)) for _ in sizes]
    select_seeds = [int(plan.integers(2**62)) for _ in sizes]

    theta = init_network(spec, init_seed)
    try:
        mask = remove(score_channels(theta), p)
    except ValueError as err:
        raise ValueError(f"pruning stage: {err}") from err
    pruned_init, topo = build_pruned(theta, mask)

    if oracle is None:
        oracle = LabelOracle(dataset.labels)
    label_map: dict[int, int] = {}
    pool = PoolState.initial(dataset.n)
    s0 = random_select(pool, sizes[0], pool_seed)
    label_map.update(zip(s0, (int(v) for v in oracle.query(s0))))
    pool = pool.acquire(s0)

    compact_spec = topo.compact_spec
    rounds: list[RoundRecord] = []
    selector = pruned_init
    for r, size in enumerate(sizes):
        x_lab, y_lab = _labeled_arrays(dataset, pool, label_map)
        try:
            selector, _ = train(pruned_init, x_lab, y_lab, train_cfg.with_seed(train_seeds[r]))
        except ValueError as err:
            raise ValueError(f"training stage (round {r}): {err}") from err
        flops = training_flops(compact_spec, input_shape, size, train_cfg.epochs)
        if val_data is not None:
            val_acc = accuracy(selector, val_data.inputs, val_data.labels)
        else:
            val_acc = accuracy(selector, x_lab, y_lab)
        if r < len(sizes) - 1:
            delta = sizes[r + 1] - size
            unlabeled = list(pool.unlabeled)
            if metric == "random":
                picks = random_select(pool, delta, select_seeds[r])
            elif metric == "kcenters":
                emb_u = penultimate_embeddings(selector, dataset.inputs[unlabeled])
                emb_l = penultimate_embeddings(selector, dataset.inputs[list(pool.labeled)])
                picks = greedy_k_centers(emb_u, emb_l, unlabeled, delta)
                flops += forward_flops(compact_spec, input_shape) * dataset.n
            else:
                logits = predict_logits(selector, dataset.inputs[unlabeled])
                probs = np.exp(logits - logits.max(axis=1, keepdims=True))
                probs /= probs.sum(axis=1, keepdims=True)
                scorer = score_least_confidence if metric == "lc" else score_entropy
                picks = top_k(scorer(probs, indices=unlabeled), delta)
                flops += forward_flops(compact_spec, input_shape) * len(unlabeled)
            label_map.update(zip(picks, (int(v) for v in oracle.query(picks))))
            pool = pool.acquire(picks)
        rounds.append(RoundRecord(r, size, val_acc, metric, flops))
    return SelectionLoopResult(pool, selector, topo, rounds, theta, pruned_init, oracle)
