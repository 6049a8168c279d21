"""Command line interface: run experiments, summarize records, print budget
schedules and FLOPs ledgers."""

from __future__ import annotations

import argparse
import sys

from .alcycle import make_schedule
from .config import build_network_spec, load_config, prepare_dataset
from .harness import ExperimentError, run_experiment, summarize
from .nets import forward_flops, init_network, param_count, training_flops
from .pruning import build_pruned, remove, score_channels


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="prunefuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("-c", "--config", required=True, help="TOML config path")
    p_run.add_argument("--seed", type=int, default=None, help="override seeds with one seed")
    p_run.add_argument("--out", default=None, help="override the output directory")

    p_sum = sub.add_parser("summarize", help="aggregate record files into summary.csv")
    p_sum.add_argument("run_dir", help="directory containing records_*.jsonl")

    p_sched = sub.add_parser("schedule", help="print the labeled-set growth schedule")
    p_sched.add_argument("-n", type=int, required=True, help="pool size")
    p_sched.add_argument("-b", type=float, required=True, help="label budget fraction")

    p_flops = sub.add_parser("flops", help="print the FLOPs ledger for a config")
    p_flops.add_argument("-c", "--config", required=True, help="TOML config path")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "summarize":
            return _cmd_summarize(args)
        if args.command == "schedule":
            return _cmd_schedule(args)
        return _cmd_flops(args)
    except (ExperimentError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    records = run_experiment(cfg)
    for rec in records:
        print(
            f"{rec.run_id}: test_acc={rec.final_test_accuracy:.4f} "
            f"total_flops={rec.total_flops} wall={rec.wall_time_s:.1f}s"
        )
    print(f"records written under {cfg.output_dir}")
    return 0


def _cmd_summarize(args) -> int:
    out = summarize(args.run_dir)
    print(out.read_text(), end="")
    print(f"summary written to {out}", file=sys.stderr)
    return 0


def _cmd_schedule(args) -> int:
    schedule = make_schedule(args.n, args.b)
    sizes = schedule.cumulative_sizes
    print(f"n={args.n} budget={args.b} rounds={len(sizes)}")
    print("cumulative labeled sizes:", " ".join(str(s) for s in sizes))
    return 0


def _cmd_flops(args) -> int:
    cfg = load_config(args.config)
    train_ds, _ = prepare_dataset(cfg)
    spec = build_network_spec(cfg, train_ds)
    input_shape = train_ds.inputs.shape[1:]
    dense_fwd = forward_flops(spec, input_shape)
    print(f"dense network: {dense_fwd} FLOPs/inference")
    if cfg.p > 0:
        theta = init_network(spec, cfg.seeds[0])
        pruned, _ = build_pruned(theta, remove(score_channels(theta), cfg.p))
        compact_fwd = forward_flops(pruned.spec, input_shape)
        print(
            f"pruned network (p={cfg.p}, seed {cfg.seeds[0]}): {compact_fwd} FLOPs/inference "
            f"({100.0 * compact_fwd / dense_fwd:.1f}% of dense), "
            f"{param_count(pruned)} params"
        )
    schedule = make_schedule(train_ds.n, cfg.b)
    print(f"schedule: {schedule.cumulative_sizes}")
    for r, size in enumerate(schedule.cumulative_sizes):
        cost = training_flops(spec, input_shape, size, cfg.selector_train.epochs)
        print(f"  round {r}: dense training on {size} samples for "
              f"{cfg.selector_train.epochs} epochs = {cost} FLOPs")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
