"""Experiment orchestration: demos, key states, cloning, seed x mode runs.

Seeds and modes form independent jobs; the runner farms them out to a
process pool and aggregates evaluation curves afterwards (mean and
population std across seeds at each evaluation point). Every payload file
is byte-reproducible for a fixed config.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..envs import PickPlaceEnv, TaskSpec, rollout_expert
from ..keystates.semantic import ScriptedAnnotator
from ..learner.bc import train_bc
from ..learner.loop import evaluate_policy, online_train
from ..learner.nets import load_mlp, save_mlp
from ..trajectory import (
    events_path_for,
    load_events,
    load_trajectory,
    save_events,
    save_trajectory,
)
from .config import ExperimentConfig, config_from_dict, config_to_dict, echo_config
from .modes import (
    KeyStateSet,
    extract_keystates,
    importance_for_mode,
    load_keystates,
    save_keystates,
)


class HarnessError(Exception):
    pass


def demo_dir(config: ExperimentConfig) -> Path:
    d = Path(config.demos.dir)
    if not d.is_absolute():
        d = Path(config.out_dir) / d
    return d / config.task.name


def demo_path(config: ExperimentConfig, demo_seed: int) -> Path:
    return demo_dir(config) / f"{demo_seed}.traj"


def demo_seeds(config: ExperimentConfig) -> list[int]:
    return [config.demos.seed_base + i for i in range(config.demos.count_bc)]


def generate_demos(config: ExperimentConfig) -> list[Path]:
    """Expert rollouts saved as trajectory files plus event sidecars."""
    paths = []
    for seed in demo_seeds(config):
        traj, events = rollout_expert(config.task, seed, render_frames=True)
        if not traj.meta.success:
            raise HarnessError(f"expert failed on demo seed {seed}")
        path = demo_path(config, seed)
        save_trajectory(traj, path)
        save_events(events, events_path_for(path))
        paths.append(path)
    return paths


def load_demos(config: ExperimentConfig, count: int | None = None):
    seeds = demo_seeds(config)[: count if count is not None else config.demos.count_bc]
    demos, events = [], []
    for seed in seeds:
        path = demo_path(config, seed)
        if not path.exists():
            raise HarnessError(f"missing demo {path}; run gen-demos first")
        demos.append(load_trajectory(path))
        events.append(load_events(events_path_for(path)))
    return demos, events


def make_annotator(config: ExperimentConfig, events):
    if config.annotator == "scripted":
        return ScriptedAnnotator(events, config.task.subgoal_texts)
    from ..keystates.vlm import VlmAnnotator

    return VlmAnnotator(model=config.vlm_model or "gpt-4v")


def keystates_path(config: ExperimentConfig, mode: str, demo_seed: int) -> Path:
    return Path(config.out_dir) / "keystates" / mode / f"{demo_seed}.json"


def extract_all_keystates(config: ExperimentConfig, mode: str) -> list[KeyStateSet]:
    """Extract and persist key states for every OT demo under one mode."""
    demos, events = load_demos(config, config.demos.count_ot)
    out = []
    for demo, demo_events in zip(demos, events):
        annotator = make_annotator(config, demo_events)
        ks = extract_keystates(
            demo,
            mode,
            annotator=annotator,
            task=config.task.task_description,
            stride=config.sample_stride,
            flow_params=config.flow,
        )
        save_keystates(ks, keystates_path(config, mode, demo.meta.seed))
        out.append(ks)
    return out


def bc_policy_path(config: ExperimentConfig) -> Path:
    return Path(config.out_dir) / "bc_policy.npz"


def train_bc_policy(config: ExperimentConfig):
    demos, _ = load_demos(config)
    bc_cfg = dataclasses.replace(config.bc)
    policy = train_bc(demos, bc_cfg)
    save_mlp(bc_policy_path(config), policy)
    return policy


def run_dir(config: ExperimentConfig, mode: str, seed: int) -> Path:
    return Path(config.out_dir) / "runs" / mode / f"seed{seed}"


def run_seed(config: ExperimentConfig, mode: str, seed: int, resume: bool = False) -> dict:
    """One online training run; returns its summary record."""
    demos, _ = load_demos(config, config.demos.count_ot)
    nus = []
    for demo in demos:
        if mode == "uniform":
            ks = KeyStateSet(semantic=(), motion=(), mode="uniform", demo_len=len(demo))
        else:
            path = keystates_path(config, mode, demo.meta.seed)
            if not path.exists():
                raise HarnessError(f"missing key states {path}; run extract-keystates first")
            ks = load_keystates(path)
            if ks.demo_len != len(demo):
                raise HarnessError(f"{path}: key states for a {ks.demo_len}-state demo, have {len(demo)}")
        nus.append(importance_for_mode(ks, config.key_weights))

    bc_path = bc_policy_path(config)
    if not bc_path.exists():
        raise HarnessError(f"missing cloning policy {bc_path}; run train-bc first")
    bc_policy = load_mlp(bc_path)

    online_cfg = dataclasses.replace(config.online, seed=seed)
    out = run_dir(config, mode, seed)
    ckpt = out / "checkpoint.npz"
    resume_from = ckpt if (resume and ckpt.exists()) else None
    _, metrics = online_train(
        config.task, demos, nus, bc_policy, online_cfg,
        out_dir=out, resume_from=resume_from,
    )
    return {
        "mode": mode,
        "seed": seed,
        "final_success": metrics.final_success_rate,
        "episodes": len(metrics.episode_rows),
    }


def _run_seed_from_dict(config_dict: dict, mode: str, seed: int, resume: bool) -> dict:
    return run_seed(config_from_dict(config_dict), mode, seed, resume)


def read_eval_curve(path) -> tuple[np.ndarray, np.ndarray]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    steps, rates = [], []
    for row in rows:
        s, r = row.split(",")
        steps.append(int(s))
        rates.append(float(r))
    return np.array(steps), np.array(rates)


def aggregate_mode(config: ExperimentConfig, mode: str):
    """Mean and population std of the eval curve across seeds."""
    curves = []
    steps_ref = None
    for seed in config.seeds:
        steps, rates = read_eval_curve(run_dir(config, mode, seed) / "eval.csv")
        if steps_ref is None:
            steps_ref = steps
        elif not np.array_equal(steps, steps_ref):
            raise HarnessError(f"eval grids differ across seeds for mode {mode}")
        curves.append(rates)
    curves = np.stack(curves)
    mean = curves.mean(axis=0)
    std = curves.std(axis=0)  # population std across seeds
    agg_path = Path(config.out_dir) / "aggregate" / f"{mode}.csv"
    agg_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,mean_success,std_success"]
    for s, m, d in zip(steps_ref, mean, std):
        lines.append(f"{s},{m!r},{d!r}")
    agg_path.write_text("\n".join(lines) + "\n")
    return steps_ref, mean, std, curves


def run_experiment(config: ExperimentConfig, resume: bool = False, prepare: bool = False) -> dict:
    """BC once, then all (mode, seed) jobs, then aggregation.

    With ``prepare`` the runner generates missing demos and key states
    itself; otherwise they must exist already. Jobs run concurrently up to
    ``config.workers``; partial results stay on disk per completed seed
    even if a later job fails.
    """
    out_dir = Path(config.out_dir)
    echo_config(config, out_dir)

    if prepare:
        if not all(demo_path(config, s).exists() for s in demo_seeds(config)):
            generate_demos(config)
        for mode in config.modes:
            if mode != "uniform":
                extract_all_keystates(config, mode)

    policy = train_bc_policy(config)
    bc_success = evaluate_policy(
        config.task, policy, config.online.eval_episodes,
        config.online.frame_stack, config.online.action_repeat,
    )

    jobs = [(mode, seed) for mode in config.modes for seed in config.seeds]
    results = []
    if config.workers > 1:
        config_dict = config_to_dict(config)
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(_run_seed_from_dict, config_dict, mode, seed, resume)
                for mode, seed in jobs
            ]
            results = [f.result() for f in futures]
    else:
        for mode, seed in jobs:
            results.append(run_seed(config, mode, seed, resume))

    summary = {"bc_success": bc_success, "modes": {}}
    for mode in config.modes:
        _, mean, std, curves = aggregate_mode(config, mode)
        summary["modes"][mode] = {
            "per_seed_final": {
                str(seed): float(curves[i, -1]) for i, seed in enumerate(config.seeds)
            },
            "mean_final": float(mean[-1]),
            "std_final": float(std[-1]),
        }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
