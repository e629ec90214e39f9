"""Command-line entry points for the experiment harness.

Subcommands: gen-demos, extract-keystates, train-bc, train, plot, ablate.
Every command takes --config and is idempotent for a fixed config: payload
files carry no timestamps and reruns produce identical bytes.
"""

import os

# the small dense updates here run fastest single-threaded, and worker
# processes must not oversubscribe the two-ish cores they get
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .harness import runner  # noqa: E402
from .harness.config import ExperimentConfig, load_config  # noqa: E402
from .harness.modes import MODES  # noqa: E402
from .harness.plotting import plot_curves  # noqa: E402
from .learner.loop import evaluate_policy  # noqa: E402

ABLATION_GRID = ["koi", "sdm_only", "mcm_only", "fixed_interval"]


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seeds", None):
        config.seeds = [int(s) for s in args.seeds.split(",")]
    if getattr(args, "mode", None):
        config.modes = [args.mode]
    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "workers", None):
        config.workers = args.workers
    return config


def cmd_gen_demos(args) -> int:
    config = _load(args)
    paths = runner.generate_demos(config)
    for path in paths:
        print(f"demo written: {path} (expert success)")
    return 0


def cmd_extract_keystates(args) -> int:
    config = _load(args)
    modes = [args.mode] if args.mode else [m for m in config.modes if m != "uniform"]
    for mode in modes:
        if mode == "uniform":
            print("mode uniform uses no key states; skipping")
            continue
        keysets = runner.extract_all_keystates(config, mode)
        for ks in keysets:
            print(
                f"mode {mode}: semantic={list(ks.semantic)} motion={list(ks.motion)}"
            )
    return 0


def cmd_train_bc(args) -> int:
    config = _load(args)
    policy = runner.train_bc_policy(config)
    rate = evaluate_policy(
        config.task, policy, config.online.eval_episodes,
        config.online.frame_stack, config.online.action_repeat,
    )
    print(f"cloning policy saved to {runner.bc_policy_path(config)}")
    print(f"cloning success rate: {rate:.2f}")
    return 0


def cmd_train(args) -> int:
    config = _load(args)
    summary = runner.run_experiment(config, resume=args.resume)
    _print_summary(summary)
    return 0


def cmd_ablate(args) -> int:
    config = _load(args)
    if not getattr(args, "mode", None):
        config.modes = list(ABLATION_GRID)
    summary = runner.run_experiment(config, resume=args.resume, prepare=True)
    _print_summary(summary)
    curves = {m: runner.aggregate_mode(config, m)[:3] for m in config.modes}
    svg = plot_curves(curves, Path(config.out_dir) / "curves.svg", title=config.task.name)
    print(f"curves written: {svg}")
    return 0


def cmd_plot(args) -> int:
    if args.files:
        steps_ref = None
        rates = []
        for path in args.files:
            steps, r = runner.read_eval_curve(path)
            if steps_ref is None:
                steps_ref = steps
            elif not np.array_equal(steps, steps_ref):
                print("error: evaluation grids differ between files", file=sys.stderr)
                return 1
            rates.append(r)
        stacked = np.stack(rates)
        curves = {"runs": (steps_ref, stacked.mean(axis=0), stacked.std(axis=0))}
        out = Path(args.out or "curves.svg")
    else:
        config = _load(args)
        curves = {m: runner.aggregate_mode(config, m)[:3] for m in config.modes}
        out = Path(args.out) if args.out else Path(config.out_dir) / "curves.svg"
        if out.is_dir():
            out = out / "curves.svg"
    svg = plot_curves(curves, out)
    print(f"curves written: {svg}")
    return 0


def _print_summary(summary: dict):
    print(f"cloning baseline success: {summary['bc_success']:.2f}")
    for mode, rec in summary["modes"].items():
        seeds = ", ".join(f"{s}:{v:.2f}" for s, v in sorted(rec["per_seed_final"].items()))
        print(
            f"mode {mode}: final success {rec['mean_final']:.2f} "
            f"± {rec['std_final']:.2f} (per seed: {seeds})"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koi",
        description="Key-state guided online imitation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True, mode=True, workers=False, resume=False):
        p.add_argument("--config", type=str, default=None, help="YAML experiment config")
        p.add_argument("--out", type=str, default=None, help="output directory override")
        if seeds:
            p.add_argument("--seeds", type=str, default=None, help="comma-separated seed list")
        if mode:
            p.add_argument("--mode", type=str, default=None, choices=list(MODES))
        if workers:
            p.add_argument("--workers", type=int, default=None, help="parallel jobs")
        if resume:
            p.add_argument("--resume", action="store_true", help="resume from checkpoints")

    p = sub.add_parser("gen-demos", help="generate expert demonstrations")
    common(p, mode=False)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("extract-keystates", help="extract key states per reward mode")
    common(p)
    p.set_defaults(func=cmd_extract_keystates)

    p = sub.add_parser("train-bc", help="pretrain the cloning policy")
    common(p, mode=False)
    p.set_defaults(func=cmd_train_bc)

    p = sub.add_parser("train", help="online training for every seed and mode")
    common(p, workers=True, resume=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plot", help="success-rate curves with std bands")
    common(p, seeds=False, mode=False)
    p.add_argument("files", nargs="*", help="eval.csv files (alternative to --config)")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ablate", help="run the ablation grid end to end")
    common(p, workers=True, resume=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
