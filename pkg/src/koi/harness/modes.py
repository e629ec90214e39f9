"""Reward-mode arm definitions.

Every ablation arm is selected purely through the mode name:

- ``koi``            annotator key states + argmax-flow motion key states
- ``uniform``        uniform demonstration marginal (the plain OT baseline)
- ``sdm_only``       annotator key states alone (motion module removed)
- ``mcm_only``       motion key states inside fixed 10-step intervals
                     (annotator removed; only motion keys enter the weights)
- ``fixed_interval`` the fixed 10-step grid itself as key states
- ``uniform_motion`` annotator key states plus every-5-step motion keys
                     (flow selection removed)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..keystates.motion import FlowParams, motion_keystates, uniform_motion_keystates
from ..keystates.semantic import (
    Annotator,
    annotate_semantic,
    decompose_task,
    sample_observations,
)
from ..trajectory import Trajectory
from ..weights import ImportanceDistribution, KeyWeightParams, build_importance, uniform_importance

MODES = ("koi", "uniform", "sdm_only", "mcm_only", "fixed_interval", "uniform_motion")

KEYSTATES_FORMAT_VERSION = 1

FIXED_GRID_STRIDE = 10
UNIFORM_MOTION_STRIDE = 5


class ModeError(Exception):
    pass


@dataclass
class KeyStateSet:
    semantic: tuple[int, ...]
    motion: tuple[int, ...]
    mode: str
    demo_len: int


def grid_keystates(demo_len: int, stride: int = FIXED_GRID_STRIDE) -> tuple[int, ...]:
    """Every ``stride``-th step, final step appended so completion is covered."""
    indices = list(range(stride, demo_len, stride))
    if not indices or indices[-1] != demo_len - 1:
        indices.append(demo_len - 1)
    return tuple(indices)


def semantic_via_annotator(demo: Trajectory, annotator: Annotator, task: str, stride: int):
    query = sample_observations(demo, stride)
    subgoals = decompose_task(task, annotator)
    return annotate_semantic(query, subgoals, annotator, demo_len=len(demo))


def extract_keystates(
    demo: Trajectory,
    mode: str,
    annotator: Annotator | None = None,
    task: str = "",
    stride: int = 10,
    flow_params: FlowParams | None = None,
) -> KeyStateSet:
    """Semantic and motion index sets for one demo under one reward mode."""
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}; expected one of {MODES}")
    n = len(demo)
    if mode == "uniform":
        return KeyStateSet(semantic=(), motion=(), mode=mode, demo_len=n)
    if mode in ("koi", "sdm_only", "uniform_motion"):
        if annotator is None:
            raise ModeError(f"mode {mode!r} needs an annotator")
        semantic = tuple(semantic_via_annotator(demo, annotator, task, stride))
    else:  # mcm_only, fixed_interval: the annotator is replaced by the grid
        semantic = grid_keystates(n)
    if mode == "koi":
        motion = tuple(motion_keystates(demo.frames(), semantic, flow_params))
    elif mode == "mcm_only":
        motion = tuple(motion_keystates(demo.frames(), semantic, flow_params))
    elif mode == "uniform_motion":
        motion = tuple(uniform_motion_keystates(semantic, UNIFORM_MOTION_STRIDE))
    else:  # sdm_only, fixed_interval
        motion = ()
    return KeyStateSet(semantic=semantic, motion=motion, mode=mode, demo_len=n)


def importance_for_mode(
    keystates: KeyStateSet, params: KeyWeightParams
) -> ImportanceDistribution:
    mode = keystates.mode
    n = keystates.demo_len
    if mode == "uniform":
        return uniform_importance(n)
    if mode in ("koi", "uniform_motion"):
        return build_importance(keystates.semantic, keystates.motion, params, n)
    if mode in ("sdm_only", "fixed_interval"):
        return build_importance(keystates.semantic, (), params, n)
    if mode == "mcm_only":
        return build_importance((), keystates.motion, params, n)
    raise ModeError(f"unknown mode {mode!r}")


def save_keystates(ks: KeyStateSet, path):
    payload = {
        "format_version": KEYSTATES_FORMAT_VERSION,
        "mode": ks.mode,
        "demo_len": ks.demo_len,
        "semantic": list(ks.semantic),
        "motion": list(ks.motion),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_keystates(path) -> KeyStateSet:
    raw = json.loads(Path(path).read_text())
    if raw.get("format_version") != KEYSTATES_FORMAT_VERSION:
        raise ModeError(f"{path}: unsupported key-state file version")
    return KeyStateSet(
        semantic=tuple(raw["semantic"]),
        motion=tuple(raw["motion"]),
        mode=raw["mode"],
        demo_len=raw["demo_len"],
    )
