"""Deterministic 2-d pick-and-place environment with grayscale rendering.

A point gripper moves in the unit workspace, grasps objects in a fixed
schema order and drops them into per-object zones. Everything — spawn
positions, kinematics, rasterization — is a pure function of (seed, action
sequence), so repeated runs are bit-identical. The rendered frames carry a
fixed pseudo-random block texture: dense optical flow needs local image
structure to latch onto.

The scripted expert is a proportional waypoint controller; its rollouts
provide demonstrations with ground-truth subgoal events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajectory import (
    State,
    SubgoalEvent,
    Trajectory,
    TrajectoryMeta,
)

TEXTURE_SEED = 20240 + 5  # fixed: the background must not vary across episodes


@dataclass(frozen=True)
class Zone:
    center: tuple[float, float]
    half: float = 0.08

    def contains(self, pos) -> bool:
        return (
            abs(pos[0] - self.center[0]) <= self.half
            and abs(pos[1] - self.center[1]) <= self.half
        )


@dataclass
class TaskSpec:
    """Geometry and schema of one pick-and-place task."""

    object_count: int = 2
    frame_size: int = 64
    max_step: float = 0.04
    grasp_radius: float = 0.06
    step_limit: int | None = None
    gripper_home: tuple[float, float] = (0.5, 0.1)

    def __post_init__(self):
        if self.object_count not in (1, 2):
            raise ValueError("object_count must be 1 or 2")
        if self.step_limit is None:
            self.step_limit = 120 if self.object_count == 1 else 200

    @property
    def name(self) -> str:
        return f"pickplace{self.object_count}"

    @property
    def schema(self) -> list[str]:
        labels = []
        for k in range(self.object_count):
            labels += [f"grasp_{k}", f"place_{k}"]
        return labels

    @property
    def subgoal_texts(self) -> list[str]:
        names = ["object A", "object B"]
        out = []
        for k in range(self.object_count):
            out += [f"grasp {names[k]}", f"place {names[k]} in its zone"]
        return out

    @property
    def task_description(self) -> str:
        n = self.object_count
        return f"pick up {n} object{'s' if n > 1 else ''} and place each in its zone"

    def zones(self) -> list[Zone]:
        if self.object_count == 1:
            return [Zone(center=(0.5, 0.15))]
        return [Zone(center=(0.25, 0.15)), Zone(center=(0.75, 0.15))]

    def spawn_region(self, k: int):
        # (xlo, xhi, ylo, yhi)
        if self.object_count == 1:
            return (0.2, 0.8, 0.6, 0.9)
        return (0.1, 0.45, 0.6, 0.9) if k == 0 else (0.55, 0.9, 0.6, 0.9)

    @property
    def feature_dim(self) -> int:
        return 3 + 4 * self.object_count + 1

    @property
    def action_dim(self) -> int:
        return 3


@dataclass
class WorldState:
    gripper: np.ndarray
    gripper_closed: bool
    objects: np.ndarray  # (k, 2)
    held: np.ndarray  # (k,) bool
    placed: np.ndarray  # (k,) bool
    zones: list[Zone] = field(default_factory=list)

    def copy(self) -> "WorldState":
        return WorldState(
            gripper=self.gripper.copy(),
            gripper_closed=self.gripper_closed,
            objects=self.objects.copy(),
            held=self.held.copy(),
            placed=self.placed.copy(),
            zones=list(self.zones),
        )


@dataclass
class Observation:
    features: np.ndarray
    frame: np.ndarray | None = None


def state_features(state: WorldState, spec: TaskSpec) -> np.ndarray:
    """Feature vector: positions and flags plus a constant positive offset.

    The offset guarantees a nonzero norm, which the cosine cost requires.
    """
    parts = [
        state.gripper[0],
        state.gripper[1],
        1.0 if state.gripper_closed else 0.0,
    ]
    for k in range(spec.object_count):
        parts += [
            state.objects[k, 0],
            state.objects[k, 1],
            1.0 if state.held[k] else 0.0,
            1.0 if state.placed[k] else 0.0,
        ]
    parts.append(1.0)
    return np.array(parts, dtype=np.float64)


def _background(spec: TaskSpec) -> np.ndarray:
    rng = np.random.default_rng(TEXTURE_SEED)
    n = spec.frame_size
    block = 4
    coarse = rng.uniform(0.08, 0.32, size=(n // block, n // block))
    return np.kron(coarse, np.ones((block, block))).astype(np.float32)


def _to_px(pos, n):
    col = int(round(float(pos[0]) * (n - 1)))
    row = int(round((1.0 - float(pos[1])) * (n - 1)))
    return row, col


def _fill(img, row, col, half, value):
    n = img.shape[0]
    r0, r1 = max(0, row - half), min(n, row + half + 1)
    c0, c1 = max(0, col - half), min(n, col + half + 1)
    img[r0:r1, c0:c1] = value


def render_frame(state: WorldState, spec: TaskSpec, background: np.ndarray | None = None) -> np.ndarray:
    """Rasterize the world deterministically onto the textured background."""
    img = (_background(spec) if background is None else background).copy()
    n = spec.frame_size
    # zones: hollow squares
    for z in state.zones:
        row, col = _to_px(z.center, n)
        half = int(round(z.half * (n - 1)))
        r0, r1 = max(0, row - half), min(n, row + half + 1)
        c0, c1 = max(0, col - half), min(n, col + half + 1)
        img[r0:r1, c0] = 0.45
        img[r0:r1, c1 - 1] = 0.45
        img[r0, c0:c1] = 0.45
        img[r1 - 1, c0:c1] = 0.45
    # objects: filled squares with distinct intensities
    for k in range(spec.object_count):
        row, col = _to_px(state.objects[k], n)
        _fill(img, row, col, 2, 0.62 + 0.16 * k)
    # gripper: hollow square, filled center when closed
    row, col = _to_px(state.gripper, n)
    half = 3
    r0, r1 = max(0, row - half), min(n, row + half + 1)
    c0, c1 = max(0, col - half), min(n, col + half + 1)
    img[r0:r1, c0] = 1.0
    img[r0:r1, c1 - 1] = 1.0
    img[r0, c0:c1] = 1.0
    img[r1 - 1, c0:c1] = 1.0
    if state.gripper_closed:
        _fill(img, row, col, 1, 1.0)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


class PickPlaceEnv:
    """Single-threaded environment instance; spawn many for multi-seed runs."""

    def __init__(self, spec: TaskSpec | None = None, render_frames: bool = True):
        self.spec = spec or TaskSpec()
        self.render_frames = render_frames
        self._bg = _background(self.spec)
        self._state: WorldState | None = None
        self._steps = 0
        self._next_subgoal = 0
        self._success = False

    @property
    def state(self) -> WorldState:
        if self._state is None:
            raise RuntimeError("reset() before reading state")
        return self._state.copy()

    @property
    def success(self) -> bool:
        return self._success

    def _observe(self) -> Observation:
        feats = state_features(self._state, self.spec)
        frame = self.render() if self.render_frames else None
        return Observation(features=feats, frame=frame)

    def render(self) -> np.ndarray:
        return render_frame(self._state, self.spec, self._bg)

    def reset(self, seed: int) -> Observation:
        rng = np.random.default_rng(seed)
        objects = np.zeros((self.spec.object_count, 2))
        for k in range(self.spec.object_count):
            xlo, xhi, ylo, yhi = self.spec.spawn_region(k)
            objects[k, 0] = rng.uniform(xlo, xhi)
            objects[k, 1] = rng.uniform(ylo, yhi)
        self._state = WorldState(
            gripper=np.array(self.spec.gripper_home, dtype=np.float64),
            gripper_closed=False,
            objects=objects,
            held=np.zeros(self.spec.object_count, dtype=bool),
            placed=np.zeros(self.spec.object_count, dtype=bool),
            zones=self.spec.zones(),
        )
        self._steps = 0
        self._next_subgoal = 0
        self._success = False
        return self._observe()

    def step(self, action):
        """Apply one clamped action; returns (obs, done, success, new_events)."""
        if self._state is None:
            raise RuntimeError("reset() before step()")
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        s = self._state
        schema = self.spec.schema
        events: list[SubgoalEvent] = []

        s.gripper = np.clip(s.gripper + action[:2] * self.spec.max_step, 0.0, 1.0)
        closing = bool(action[2] > 0.5)

        held_k = int(np.argmax(s.held)) if s.held.any() else None
        if held_k is not None:
            if closing:
                s.objects[held_k] = s.gripper.copy()
            else:
                # release; a drop inside the object's own zone completes the place
                s.held[held_k] = False
                s.objects[held_k] = s.gripper.copy()
                if (
                    self._next_subgoal < len(schema)
                    and schema[self._next_subgoal] == f"place_{held_k}"
                    and s.zones[held_k].contains(s.objects[held_k])
                ):
                    s.placed[held_k] = True
                    events.append(SubgoalEvent(index=self._steps + 1, label=f"place_{held_k}"))
                    self._next_subgoal += 1
        elif closing and self._next_subgoal < len(schema):
            # only the object the schema expects next can be (re-)grasped
            expected = schema[self._next_subgoal]
            k = int(expected.split("_")[1])
            if not s.placed[k] and np.linalg.norm(s.gripper - s.objects[k]) <= self.spec.grasp_radius:
                s.held[k] = True
                s.objects[k] = s.gripper.copy()
                if expected == f"grasp_{k}":
                    events.append(SubgoalEvent(index=self._steps + 1, label=f"grasp_{k}"))
                    self._next_subgoal += 1

        s.gripper_closed = closing
        self._steps += 1
        self._success = self._next_subgoal >= len(schema)
        done = self._success or self._steps >= self.spec.step_limit
        return self._observe(), done, self._success, events


class ScriptedExpert:
    """Proportional controller toward the current waypoint.

    Waypoints, in schema order: the next expected object, then that
    object's zone center. Grip closes inside the grasp radius and opens
    once the carried object sits inside its zone.
    """

    def __init__(self, spec: TaskSpec):
        self.spec = spec

    def act(self, state: WorldState) -> np.ndarray:
        spec = self.spec
        held_k = int(np.argmax(state.held)) if state.held.any() else None
        if held_k is not None:
            target = np.array(state.zones[held_k].center)
            delta = target - state.gripper
            if np.linalg.norm(delta) <= state.zones[held_k].half * 0.5:
                return np.array([0.0, 0.0, -1.0])  # release inside the zone
            move = np.clip(delta / spec.max_step, -1.0, 1.0)
            return np.array([move[0], move[1], 1.0])
        todo = [k for k in range(spec.object_count) if not state.placed[k]]
        if not todo:
            return np.zeros(3)
        k = todo[0]
        target = state.objects[k]
        delta = target - state.gripper
        if np.linalg.norm(delta) <= spec.grasp_radius * 0.75:
            return np.array([0.0, 0.0, 1.0])  # close on the object
        move = np.clip(delta / spec.max_step, -1.0, 1.0)
        return np.array([move[0], move[1], -1.0])


def rollout_expert(spec: TaskSpec, seed: int, render_frames: bool = True):
    """Run the scripted expert once; returns (Trajectory, events).

    States record the action taken at them; the terminal state carries none.
    Event indices point at the state where the subgoal first holds.
    """
    env = PickPlaceEnv(spec, render_frames=render_frames)
    expert = ScriptedExpert(spec)
    obs = env.reset(seed)
    states = []
    events: list[SubgoalEvent] = []
    done = False
    while not done:
        action = expert.act(env.state)
        states.append(State(features=obs.features, frame=obs.frame, action=action))
        obs, done, success, new_events = env.step(action)
        events.extend(new_events)
    states.append(State(features=obs.features, frame=obs.frame, action=None))
    meta = TrajectoryMeta(task=spec.name, seed=seed, success=env.success)
    return Trajectory(states, meta), tuple(events)
