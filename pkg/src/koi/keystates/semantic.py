"""Semantic key states: subgoal decomposition and key-frame selection.

Expert observations are sampled on a fixed stride to bound the number of
frames per query; the final state is always appended so task completion is
locatable even off the stride grid. An annotator — the deterministic
scripted oracle in all automated tests, or the wire client in
``koi.keystates.vlm`` — decomposes the task into subgoals and maps every
subgoal to one sampled frame, all subgoals in a single request. Replies
are validated for temporal consistency: indices must be strictly
increasing, in range, and on the sampled grid; violations are retried a
bounded number of times and then rejected.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from ..trajectory import Trajectory

DEFAULT_SAMPLE_STRIDE = 10
DEFAULT_MAX_RETRIES = 2


class AnnotationError(Exception):
    pass


class AnnotatorFormatError(AnnotationError):
    """The annotator reply could not be parsed; carries the raw reply."""

    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


class TemporalConsistencyError(AnnotationError):
    """Reply indices are non-monotone, off-grid, or out of range."""


@dataclass(frozen=True)
class SubgoalList:
    task_description: str
    subgoals: tuple[str, ...]

    def __post_init__(self):
        if len(self.subgoals) < 1:
            raise AnnotationError("decomposition must contain at least one subgoal")
        if any(not s.strip() for s in self.subgoals):
            raise AnnotationError("subgoal descriptions must be non-empty")


@dataclass(frozen=True)
class QuerySet:
    indices: tuple[int, ...]
    frames: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class SemanticIndexSet:
    indices: tuple[int, ...]

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


class Annotator:
    """Interface: subgoal decomposition plus key-state selection."""

    def decompose(self, task_description: str) -> list[str]:
        raise NotImplementedError

    def select_keystates(self, query: QuerySet, subgoals: SubgoalList) -> list[int]:
        """Map every subgoal to a sampled time step, in one request."""
        raise NotImplementedError


def sample_observations(demo: Trajectory, stride: int = DEFAULT_SAMPLE_STRIDE) -> QuerySet:
    """Frames at steps {0, stride, 2*stride, ...} plus the final step."""
    if stride < 1:
        raise AnnotationError("stride must be >= 1")
    if demo.frame_shape is None:
        raise AnnotationError("demonstration carries no frames")
    n = len(demo)
    indices = list(range(0, n, stride))
    if indices[-1] != n - 1:
        indices.append(n - 1)
    frames = tuple(demo[i].frame for i in indices)
    return QuerySet(indices=tuple(indices), frames=frames)


def decompose_task(task: str, annotator: Annotator) -> SubgoalList:
    if not task.strip():
        raise AnnotationError("task description is empty")
    subgoals = annotator.decompose(task)
    if not subgoals:
        raise AnnotatorFormatError("annotator returned an empty decomposition", raw=subgoals)
    return SubgoalList(task_description=task, subgoals=tuple(str(s) for s in subgoals))


def validate_monotone(indices, demo_len: int) -> SemanticIndexSet:
    """Accept indices iff strictly increasing and all inside [0, demo_len)."""
    indices = [int(i) for i in indices]
    for pos, idx in enumerate(indices):
        if not (0 <= idx < demo_len):
            raise TemporalConsistencyError(
                f"index {idx} at position {pos} outside [0, {demo_len})"
            )
    for pos, (a, b) in enumerate(zip(indices, indices[1:])):
        if b <= a:
            raise TemporalConsistencyError(
                f"indices not strictly increasing at positions {pos}, {pos + 1}: "
                f"{a} then {b}"
            )
    return SemanticIndexSet(indices=tuple(indices))


def annotate_semantic(
    query: QuerySet,
    subgoals: SubgoalList,
    annotator: Annotator,
    demo_len: int | None = None,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> SemanticIndexSet:
    """One key state per subgoal, validated for temporal consistency.

    Replies naming steps between two sampled indices are rejected rather
    than rounded; a bounded number of retries covers transient annotator
    noise before the error propagates.
    """
    if not query.indices:
        raise AnnotationError("query set is empty")
    demo_len = demo_len if demo_len is not None else query.indices[-1] + 1
    grid = set(query.indices)
    last_error: AnnotationError | None = None
    for _ in range(max_retries + 1):
        raw = annotator.select_keystates(query, subgoals)
        try:
            if len(raw) != len(subgoals.subgoals):
                raise TemporalConsistencyError(
                    f"expected {len(subgoals.subgoals)} indices, got {len(raw)}"
                )
            off_grid = [i for i in raw if i not in grid]
            if off_grid:
                raise TemporalConsistencyError(
                    f"indices {off_grid} are not on the sampled grid"
                )
            return validate_monotone(raw, demo_len)
        except TemporalConsistencyError as exc:
            last_error = exc
    raise last_error


class ScriptedAnnotator(Annotator):
    """Deterministic oracle backed by the environment's ground truth.

    Decomposition returns the task's declared subgoal texts; selection maps
    each recorded subgoal event to the nearest sampled index at or after it.
    """

    def __init__(self, events, subgoal_texts):
        self.events = tuple(events)
        self.subgoal_texts = tuple(subgoal_texts)
        if len(self.events) != len(self.subgoal_texts):
            raise AnnotationError(
                f"{len(self.events)} events but {len(self.subgoal_texts)} subgoal texts"
            )

    def decompose(self, task_description: str) -> list[str]:
        return list(self.subgoal_texts)

    def select_keystates(self, query: QuerySet, subgoals: SubgoalList) -> list[int]:
        out = []
        for event in self.events:
            pos = bisect.bisect_left(query.indices, event.index)
            if pos >= len(query.indices):
                pos = len(query.indices) - 1
            out.append(query.indices[pos])
        return out
