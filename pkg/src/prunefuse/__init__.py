"""Pruned-surrogate data selection with weight fusion and distilled fine-tuning."""

from .alcycle import BudgetSchedule, RoundRecord, make_schedule, run_selection_loop
from .config import ExperimentConfig, build_network_spec, load_config, prepare_dataset
from .dataio import Dataset, LabelOracle, gen_blobs, load_idx, save_idx, split
from .fusion import FusionReport, finetune_fused, fuse
from .harness import MetricsRecord, run_experiment, selection_gap, summarize
from .losses import cross_entropy, kd_composite_loss, softmax_temperature
from .nets import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Network,
    NetworkSpec,
    ReLU,
    forward,
    forward_flops,
    init_network,
    param_count,
    penultimate_embeddings,
    predict_proba,
    training_flops,
)
from .pruning import PrunedTopology, achieved_sparsity, build_pruned, remove, score_channels
from .selection import (
    PoolState,
    ScoreVector,
    greedy_k_centers,
    random_select,
    score_entropy,
    score_least_confidence,
    top_k,
)
from .training import TrainConfig, accuracy, sgd_step, train

__version__ = "0.1.0"
