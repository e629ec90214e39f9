"""Motion key states: densest optical flow inside each semantic interval.

Flow between consecutive frames comes from the Farneback estimator
(quadratic polynomial expansion over Gaussian-weighted neighborhoods with
pyramid refinement), as shipped by OpenCV. The motion statistic is the mean
per-pixel flow magnitude, which keeps it independent of resolution. Within
each open interval between consecutive semantic key states (the stretch
before the first one included), the frame transition with the largest
magnitude marks the motion key state.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np


class FlowError(Exception):
    pass


@dataclass
class FlowParams:
    pyramid_levels: int = 2
    pyramid_scale: float = 0.5
    window_size: int = 13
    poly_n: int = 5
    poly_sigma: float = 1.1
    iterations: int = 3


@dataclass
class FlowField:
    """Per-pixel displacement (u along columns, v along rows)."""

    u: np.ndarray
    v: np.ndarray


def _check_frame(frame, name):
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise FlowError(f"{name} must be a 2-d grayscale frame")
    if not np.all(np.isfinite(frame)):
        raise FlowError(f"{name} contains non-finite values")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise FlowError(f"{name} intensities must lie in [0, 1]")
    return frame


def farneback_flow(a: np.ndarray, b: np.ndarray, params: FlowParams | None = None) -> FlowField:
    """Dense displacement field estimating motion from frame a to frame b."""
    params = params or FlowParams()
    a = _check_frame(a, "first frame")
    b = _check_frame(b, "second frame")
    if a.shape != b.shape:
        raise FlowError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < max(params.window_size, params.poly_n):
        raise FlowError(
            f"frame {a.shape} smaller than the expansion window "
            f"({params.window_size})"
        )
    # Bit-identical frames carry no motion evidence; the estimator itself
    # leaves sub-pixel border noise on them, so short-circuit to exact zero.
    if np.array_equal(a, b):
        zero = np.zeros(a.shape, dtype=np.float32)
        return FlowField(u=zero, v=zero.copy())
    a8 = np.clip(np.rint(np.asarray(a, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    b8 = np.clip(np.rint(np.asarray(b, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    flow = cv2.calcOpticalFlowFarneback(
        a8,
        b8,
        None,
        pyr_scale=params.pyramid_scale,
        levels=params.pyramid_levels,
        winsize=params.window_size,
        iterations=params.iterations,
        poly_n=params.poly_n,
        poly_sigma=params.poly_sigma,
        flags=0,
    )
    return FlowField(u=flow[..., 0], v=flow[..., 1])


def flow_magnitude(flow: FlowField) -> float:
    """Mean per-pixel magnitude sqrt(u^2 + v^2); zero iff the field is zero."""
    return float(np.mean(np.hypot(flow.u, flow.v)))


@dataclass
class MotionIndexSet:
    """One index per non-empty interval, each strictly inside its interval."""

    indices: tuple[int, ...]

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def motion_keystates(frames, semantic, params: FlowParams | None = None) -> MotionIndexSet:
    """Argmax-flow index inside each open interval between semantic keys.

    Intervals are (0, s_1), (s_1, s_2), ..., (s_{K-1}, s_K) — one per
    semantic key state, the first anchored at the trajectory start. The
    magnitude at index j measures the transition from frame j-1 to frame j,
    so the selected index labels the later frame of the pair. Ties break
    toward the earlier index; intervals without interior indices contribute
    nothing.
    """
    sem = list(getattr(semantic, "indices", semantic))
    if not sem:
        raise FlowError("semantic index set is empty")
    n = len(frames)
    if any(not (0 <= s < n) for s in sem):
        raise FlowError(f"semantic indices out of range for {n} frames")
    if any(b <= a for a, b in zip(sem, sem[1:])):
        raise FlowError("semantic indices must be strictly increasing")

    bounds = [0] + sem
    chosen = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        best_j = None
        best_mag = -1.0
        for j in range(lo + 1, hi):
            mag = flow_magnitude(farneback_flow(frames[j - 1], frames[j], params))
            if mag > best_mag:
                best_mag = mag
                best_j = j
        if best_j is not None:
            chosen.append(best_j)
    return MotionIndexSet(indices=tuple(chosen))


def uniform_motion_keystates(semantic, stride: int = 5) -> MotionIndexSet:
    """Every ``stride``-th index inside each interval, flow ignored.

    The non-selective baseline for the motion module ablation.
    """
    sem = list(getattr(semantic, "indices", semantic))
    if not sem:
        raise FlowError("semantic index set is empty")
    bounds = [0] + sem
    chosen = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        j = lo + stride
        while j < hi:
            chosen.append(j)
            j += stride
    return MotionIndexSet(indices=tuple(chosen))
