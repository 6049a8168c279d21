"""Experiment driver: end-to-end runs for all modes, a FLOPs ledger, and
JSON-lines/CSV metrics emission.

Records are byte-reproducible for a given (config, seed): wall time is kept on
the in-memory record but never serialized.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alcycle import BudgetSchedule, RoundRecord, make_schedule, run_selection_loop
from .config import ExperimentConfig, build_network_spec, network_descriptor, prepare_dataset
from .dataio import Dataset
from .fusion import FusionReport, finetune_fused, fuse
from .nets import Network, init_network, param_count, training_flops
from .training import accuracy, train

SCHEMA_VERSION = 1

__all__ = [
    "ExperimentError",
    "MetricsRecord",
    "run_experiment",
    "selection_gap",
    "summarize",
    "training_flops",
]


class ExperimentError(RuntimeError):
    """A stage of an experiment run failed; the stage label is in the message."""


@dataclass
class MetricsRecord:
    run_id: str
    seed: int
    mode: str
    p: float
    b: float
    metric: str
    dataset: str
    network: str
    rounds: list[RoundRecord]
    final_test_accuracy: float
    selection_flops: int
    final_training_flops: int
    selector_param_count: int
    final_param_count: int
    final_history: list[float] = field(default_factory=list)
    fusion_report: FusionReport | None = None
    kd: dict | None = None
    wall_time_s: float = 0.0  # reporting only; excluded from serialization

    @property
    def total_flops(self) -> int:
        return self.selection_flops + self.final_training_flops

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "seed": self.seed,
            "mode": self.mode,
            "p": self.p,
            "b": self.b,
            "metric": self.metric,
            "dataset": self.dataset,
            "network": self.network,
            "rounds": [r.to_dict() for r in self.rounds],
            "final_test_accuracy": self.final_test_accuracy,
            "selection_flops": self.selection_flops,
            "final_training_flops": self.final_training_flops,
            "total_flops": self.total_flops,
            "selector_param_count": self.selector_param_count,
            "final_param_count": self.final_param_count,
            "final_history": self.final_history,
            "fusion_report": self.fusion_report.to_json_dict() if self.fusion_report else None,
            "kd": self.kd,
        }


def _record_path(cfg: ExperimentConfig) -> Path:
    # prunefuse runs carry a kd marker so ablation pairs can share a directory
    kd = ("_kdon" if cfg.kd.enabled else "_kdoff") if cfg.mode == "prunefuse" else ""
    name = f"records_{cfg.mode}_{cfg.metric}_p{cfg.p:g}_b{cfg.b:g}{kd}.jsonl"
    return Path(cfg.output_dir) / name


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRecord]:
    """Run one experiment per seed and write the records as JSON-lines.

    Each seed contributes one line to records_*.jsonl plus one line per round
    to the rounds_*.jsonl sidecar.  On a stage failure the partial record
    stream is flushed with an error marker line before ExperimentError is
    raised.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = _record_path(cfg)
    rounds_path = path.with_name(path.name.replace("records_", "rounds_", 1))
    records: list[MetricsRecord] = []
    with open(path, "w") as f, open(rounds_path, "w") as rf:
        for seed in cfg.seeds:
            try:
                record = _run_single(cfg, int(seed))
            except Exception as err:
                marker = {
                    "schema_version": SCHEMA_VERSION,
                    "run_id": _run_id(cfg, seed),
                    "seed": int(seed),
                    "error": str(err),
                }
                f.write(json.dumps(marker, sort_keys=True) + "\n")
                f.flush()
                raise ExperimentError(f"seed {seed}: {err}") from err
            records.append(record)
            f.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
            f.flush()
            for rnd in record.rounds:
                line = {"run_id": record.run_id, "seed": record.seed, **rnd.to_dict()}
                rf.write(json.dumps(line, sort_keys=True) + "\n")
            rf.flush()
    return records


def _run_id(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.mode}-{cfg.metric}-p{cfg.p:g}-b{cfg.b:g}-s{seed}"


def _stage(label: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ExperimentError:
        raise
    except Exception as err:
        raise ExperimentError(f"stage {label}: {err}") from err


def _run_single(cfg: ExperimentConfig, seed: int) -> MetricsRecord:
    started = time.perf_counter()
    train_ds, test_ds = _stage("prepare", prepare_dataset, cfg)
    spec = build_network_spec(cfg, train_ds)
    input_shape = train_ds.inputs.shape[1:]
    rng = np.random.default_rng(seed)
    loop_seed = int(rng.integers(2**62))
    final_seed = int(rng.integers(2**62))

    rounds: list[RoundRecord] = []
    fusion_report = None
    kd_info = None
    final_history: list[float] = []
    selector_params = 0

    if cfg.mode == "full_data_reference":
        theta = init_network(spec, loop_seed)
        train_cfg = cfg.baseline_train.to_train_config(final_seed)
        final_model, history = _stage(
            "final_training", train, theta, train_ds.inputs, train_ds.labels, train_cfg
        )
        final_history = history["accuracy"]
        final_flops = training_flops(spec, input_shape, train_ds.n, train_cfg.epochs)
    else:
        schedule = _stage("schedule", make_schedule, train_ds.n, cfg.b)
        loop_p = 0.0 if cfg.mode == "baseline_al" else cfg.p
        loop_train = cfg.baseline_train if cfg.mode == "baseline_al" else cfg.selector_train
        result = _stage(
            "selection_loop",
            run_selection_loop,
            train_ds,
            spec,
            loop_p,
            cfg.metric,
            schedule,
            loop_train.to_train_config(0),
            loop_seed,
            val_data=test_ds,
        )
        rounds = result.rounds
        selector_params = param_count(result.selector)
        labeled = list(result.pool.labeled)
        x_lab = train_ds.inputs[labeled]
        y_lab = train_ds.labels[labeled]

        if cfg.mode == "baseline_al":
            # The loop's final retraining on the full labeled set is the
            # baseline's final model; its cost sits in the selection ledger.
            final_model = result.selector
            final_flops = 0
        elif cfg.mode == "no_fusion_ablation":
            train_cfg = cfg.fused_train.to_train_config(final_seed)
            final_model, history = _stage(
                "final_training", train, result.theta_init, x_lab, y_lab, train_cfg
            )
            final_history = history["accuracy"]
            final_flops = training_flops(spec, input_shape, len(labeled), train_cfg.epochs)
        else:  # prunefuse
            theta_f, fusion_report = _stage("fusion", fuse, result.theta_init, result.selector, result.topo)
            train_cfg = cfg.fused_train.to_train_config(final_seed)
            if cfg.kd.enabled:
                kd_info = {"enabled": True, "temperature": cfg.kd.temperature, "lam": cfg.kd.lam}
                final_model, history = _stage(
                    "final_training",
                    finetune_fused,
                    theta_f,
                    result.selector,
                    x_lab,
                    y_lab,
                    train_cfg,
                    cfg.kd.temperature,
                    cfg.kd.lam,
                )
            else:
                kd_info = {"enabled": False, "temperature": cfg.kd.temperature, "lam": cfg.kd.lam}
                final_model, history = _stage(
                    "final_training", train, theta_f, x_lab, y_lab, train_cfg
                )
            final_history = history["accuracy"]
            final_flops = training_flops(spec, input_shape, len(labeled), train_cfg.epochs)

    test_acc = _stage("evaluation", accuracy, final_model, test_ds.inputs, test_ds.labels)
    record = MetricsRecord(
        run_id=_run_id(cfg, seed),
        seed=seed,
        mode=cfg.mode,
        p=cfg.p,
        b=cfg.b,
        metric=cfg.metric,
        dataset=train_ds.name,
        network=network_descriptor(spec),
        rounds=rounds,
        final_test_accuracy=test_acc,
        selection_flops=sum(r.flops_this_round for r in rounds),
        final_training_flops=final_flops,
        selector_param_count=selector_params,
        final_param_count=param_count(final_model),
        final_history=final_history,
        fusion_report=fusion_report,
        kd=kd_info,
        wall_time_s=time.perf_counter() - started,
    )
    return record


def selection_gap(records_a: list[MetricsRecord], records_b: list[MetricsRecord]) -> float:
    """Mean absolute test-accuracy gap between two record sets, paired by seed.

    Both sets must come from the same dataset and network; this is the
    accuracy proxy for the expected-loss gap between training on a selected
    subset and training on the full data.
    """
    if not records_a or not records_b:
        raise ValueError("both record sets must be nonempty")
    by_seed_a = {r.seed: r for r in records_a}
    by_seed_b = {r.seed: r for r in records_b}
    if set(by_seed_a) != set(by_seed_b):
        raise ValueError(f"seed sets differ: {sorted(by_seed_a)} vs {sorted(by_seed_b)}")
    gaps = []
    for seed, ra in sorted(by_seed_a.items()):
        rb = by_seed_b[seed]
        if ra.dataset != rb.dataset or ra.network != rb.network:
            raise ValueError(
                f"seed {seed}: runs are not comparable "
                f"({ra.dataset}/{ra.network} vs {rb.dataset}/{rb.network})"
            )
        gaps.append(abs(ra.final_test_accuracy - rb.final_test_accuracy))
    return float(np.mean(gaps))


CSV_COLUMNS = [
    "schema_version", "mode", "p", "b", "metric", "n_seeds",
    "acc_mean", "acc_std", "selection_flops_mean", "final_flops_mean",
    "total_flops_mean", "total_flops_std",
]


def summarize(run_dir: str) -> Path:
    """Aggregate every records_*.jsonl in run_dir into summary.csv.

    Rows are keyed by (mode, p, b, metric) with population mean/stdev; output
    ordering is deterministic.  Malformed lines are rejected with their file
    and line number.
    """
    run_path = Path(run_dir)
    groups: dict[tuple, list[dict]] = {}
    files = sorted(run_path.glob("records_*.jsonl"))
    if not files:
        raise ValueError(f"no records_*.jsonl files found in {run_dir}")
    for path in files:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as err:
                    raise ValueError(f"{path}:{lineno}: malformed record ({err})") from err
                if "error" in rec:
                    continue
                try:
                    key = (rec["mode"], rec["p"], rec["b"], rec["metric"])
                except KeyError as err:
                    raise ValueError(f"{path}:{lineno}: record missing field {err}") from err
                groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        accs = [r["final_test_accuracy"] for r in recs]
        totals = [r["total_flops"] for r in recs]
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "mode": key[0],
            "p": key[1],
            "b": key[2],
            "metric": key[3],
            "n_seeds": len(recs),
            "acc_mean": statistics.fmean(accs),
            "acc_std": statistics.pstdev(accs),
            "selection_flops_mean": statistics.fmean(r["selection_flops"] for r in recs),
            "final_flops_mean": statistics.fmean(r["final_training_flops"] for r in recs),
            "total_flops_mean": statistics.fmean(totals),
            "total_flops_std": statistics.pstdev(totals),
        })
    out_path = run_path / "summary.csv"
    with open(out_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return out_path
