"""Trajectory data model and on-disk container format.

A trajectory is an ordered list of states, each carrying a feature vector
plus optional rendered frame, action and proprioception. Demonstrations and
exploration episodes share the same type; downstream consumers pick the view
they need (features for transport costs, frames for optical flow).

The file format is a self-describing binary container: a fixed magic,
an explicit format-version field, a JSON metadata header, then per-state
records with raw little-endian arrays. Frames are stored row-major as
float32 with H and W declared in the header, so round-trips are bit-exact
without any codec dependency.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"KTRJ"
FORMAT_VERSION = 1

EVENTS_FORMAT_VERSION = 1
EVENTS_SUFFIX = ".events.json"


class TrajectoryError(Exception):
    """Base class for trajectory model failures."""


class InvariantError(TrajectoryError):
    """A state or trajectory invariant does not hold."""


class FormatError(TrajectoryError):
    """The on-disk payload is not a valid trajectory container."""


def _as_readonly(a, dtype):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class State:
    """One time step: features plus optional frame / action / proprio."""

    features: np.ndarray
    frame: np.ndarray | None = None
    action: np.ndarray | None = None
    proprio: np.ndarray | None = None

    def __post_init__(self):
        feats = _as_readonly(self.features, np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise InvariantError("features must be a non-empty 1-d vector")
        if not np.all(np.isfinite(feats)):
            raise InvariantError("features contain non-finite values")
        object.__setattr__(self, "features", feats)

        if self.frame is not None:
            frame = _as_readonly(self.frame, np.float32)
            if frame.ndim != 2:
                raise InvariantError("frame must be a 2-d grayscale image")
            if not np.all(np.isfinite(frame)):
                raise InvariantError("frame contains non-finite values")
            if frame.min() < 0.0 or frame.max() > 1.0:
                raise InvariantError("frame intensities must lie in [0, 1]")
            object.__setattr__(self, "frame", frame)

        for name in ("action", "proprio"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = _as_readonly(vec, np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise InvariantError(f"{name} must be a non-empty 1-d vector")
            if not np.all(np.isfinite(vec)):
                raise InvariantError(f"{name} contains non-finite values")
            object.__setattr__(self, name, vec)


@dataclass(frozen=True)
class TrajectoryMeta:
    task: str
    seed: int
    success: bool


@dataclass(frozen=True)
class SubgoalEvent:
    """Ground-truth subgoal completion marker used by the scripted annotator."""

    index: int
    label: str


class Trajectory:
    """Ordered, immutable sequence of states with run metadata.

    Invariants: at least two states; feature dimension constant; frame,
    action and proprio dimensions constant among the states that carry them.
    """

    def __init__(self, states, meta: TrajectoryMeta):
        states = tuple(states)
        if len(states) < 2:
            raise InvariantError("trajectory needs at least 2 states")
        dim = states[0].features.shape[0]
        frame_shape = None
        action_dim = None
        proprio_dim = None
        for i, s in enumerate(states):
            if not isinstance(s, State):
                raise InvariantError(f"state {i} is not a State")
            if s.features.shape[0] != dim:
                raise InvariantError(
                    f"state {i}: feature dim {s.features.shape[0]} != {dim}"
                )
            if s.frame is not None:
                if frame_shape is None:
                    frame_shape = s.frame.shape
                elif s.frame.shape != frame_shape:
                    raise InvariantError(f"state {i}: frame shape differs")
            if s.action is not None:
                if action_dim is None:
                    action_dim = s.action.shape[0]
                elif s.action.shape[0] != action_dim:
                    raise InvariantError(f"state {i}: action dim differs")
            if s.proprio is not None:
                if proprio_dim is None:
                    proprio_dim = s.proprio.shape[0]
                elif s.proprio.shape[0] != proprio_dim:
                    raise InvariantError(f"state {i}: proprio dim differs")
        self.states = states
        self.meta = meta
        self.feature_dim = dim
        self.frame_shape = frame_shape
        self.action_dim = action_dim
        self.proprio_dim = proprio_dim

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i) -> State:
        return self.states[i]

    def features_matrix(self) -> np.ndarray:
        """All feature vectors stacked into an (N, D) array."""
        return np.stack([s.features for s in self.states])

    def frames(self) -> list[np.ndarray]:
        if self.frame_shape is None:
            raise InvariantError("trajectory carries no frames")
        return [s.frame for s in self.states if s.frame is not None]

    def action_pairs(self):
        """(features, action) arrays over states that carry an action."""
        idx = [i for i, s in enumerate(self.states) if s.action is not None]
        if not idx:
            raise InvariantError("trajectory carries no actions")
        feats = np.stack([self.states[i].features for i in idx])
        acts = np.stack([self.states[i].action for i in idx])
        return feats, acts

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        if self.meta != other.meta or len(self) != len(other):
            return False
        for a, b in zip(self.states, other.states):
            if not np.array_equal(a.features, b.features):
                return False
            for name in ("frame", "action", "proprio"):
                va, vb = getattr(a, name), getattr(b, name)
                if (va is None) != (vb is None):
                    return False
                if va is not None and not np.array_equal(va, vb):
                    return False
        return True


def validate_events(events, length: int | None = None):
    """Check that subgoal event indices are strictly increasing (and in range)."""
    prev = -1
    for e in events:
        if e.index <= prev:
            raise InvariantError(
                f"event indices must be strictly increasing: {e.index} after {prev}"
            )
        if length is not None and not (0 <= e.index < length):
            raise InvariantError(f"event index {e.index} out of range [0, {length})")
        prev = e.index
    return tuple(events)


_FLAG_FRAME = 1
_FLAG_ACTION = 2
_FLAG_PROPRIO = 4


def save_trajectory(traj: Trajectory, path):
    """Serialize a trajectory; the result round-trips bit-exactly."""
    path = Path(path)
    header = {
        "task": traj.meta.task,
        "seed": traj.meta.seed,
        "success": traj.meta.success,
        "num_states": len(traj),
        "feature_dim": traj.feature_dim,
        "frame_shape": list(traj.frame_shape) if traj.frame_shape else None,
        "action_dim": traj.action_dim,
        "proprio_dim": traj.proprio_dim,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header_bytes)), header_bytes]
    for s in traj.states:
        flags = 0
        if s.frame is not None:
            flags |= _FLAG_FRAME
        if s.action is not None:
            flags |= _FLAG_ACTION
        if s.proprio is not None:
            flags |= _FLAG_PROPRIO
        chunks.append(struct.pack("<B", flags))
        chunks.append(s.features.astype("<f8").tobytes())
        if s.frame is not None:
            chunks.append(s.frame.astype("<f4").tobytes())
        if s.action is not None:
            chunks.append(s.action.astype("<f8").tobytes())
        if s.proprio is not None:
            chunks.append(s.proprio.astype("<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated file: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def load_trajectory(path) -> Trajectory:
    """Read a trajectory container, validating every invariant on the way in."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    r = _Reader(path.read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a trajectory file")
    version, header_len = struct.unpack("<II", r.take(8))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc

    num = header["num_states"]
    dim = header["feature_dim"]
    frame_shape = tuple(header["frame_shape"]) if header["frame_shape"] else None
    action_dim = header["action_dim"]
    proprio_dim = header["proprio_dim"]

    states = []
    for i in range(num):
        (flags,) = struct.unpack("<B", r.take(1))
        feats = np.frombuffer(r.take(8 * dim), dtype="<f8")
        if not np.all(np.isfinite(feats)):
            bad = int(np.flatnonzero(~np.isfinite(feats))[0])
            raise InvariantError(
                f"{path}: state {i} feature component {bad} is non-finite"
            )
        frame = action = proprio = None
        if flags & _FLAG_FRAME:
            if frame_shape is None:
                raise FormatError(f"{path}: state {i} has a frame but header declares none")
            h, w = frame_shape
            frame = np.frombuffer(r.take(4 * h * w), dtype="<f4").reshape(h, w)
        if flags & _FLAG_ACTION:
            if action_dim is None:
                raise FormatError(f"{path}: state {i} has an action but header declares none")
            action = np.frombuffer(r.take(8 * action_dim), dtype="<f8")
        if flags & _FLAG_PROPRIO:
            if proprio_dim is None:
                raise FormatError(f"{path}: state {i} has proprio but header declares none")
            proprio = np.frombuffer(r.take(8 * proprio_dim), dtype="<f8")
        states.append(State(features=feats, frame=frame, action=action, proprio=proprio))
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return Trajectory(
        states,
        TrajectoryMeta(task=header["task"], seed=header["seed"], success=header["success"]),
    )


def events_path_for(traj_path) -> Path:
    p = Path(traj_path)
    return p.with_name(p.stem + EVENTS_SUFFIX)


def save_events(events, path):
    """Write the subgoal-event sidecar next to a demo trajectory."""
    events = validate_events(events)
    payload = {
        "format_version": EVENTS_FORMAT_VERSION,
        "events": [{"index": e.index, "label": e.label} for e in events],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_events(path):
    raw = json.loads(Path(path).read_text())
    if raw.get("format_version") != EVENTS_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported events format version")
    events = [SubgoalEvent(index=e["index"], label=e["label"]) for e in raw["events"]]
    return validate_events(events)
