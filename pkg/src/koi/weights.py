"""Demonstration-side importance distribution from key states.

The distribution over demonstration time steps is a discrete Gaussian
mixture: one component per semantic key state (narrow, heavily weighted,
heaviest on the final one) and one per motion key state (wide, light).
Evaluating on the integer grid and renormalizing absorbs the truncation of
components near the demonstration's ends. The uniform distribution is the
baseline that ignores key states entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class WeightError(Exception):
    pass


@dataclass
class KeyWeightParams:
    """Mixture weights and widths; semantic peaks are narrower than motion."""

    a_semantic: float = 0.15
    a_semantic_last: float = 0.35
    a_motion: float = 0.05
    sigma_semantic: float = 10.0
    sigma_motion: float = 25.0

    def __post_init__(self):
        for name in ("a_semantic", "a_semantic_last", "a_motion", "sigma_semantic", "sigma_motion"):
            if not (getattr(self, name) > 0):
                raise WeightError(f"{name} must be positive")
        if not (self.sigma_semantic < self.sigma_motion):
            raise WeightError("sigma_semantic must be smaller than sigma_motion")


@dataclass
class ImportanceDistribution:
    nu: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        if nu.ndim != 1 or nu.size == 0:
            raise WeightError("nu must be a non-empty vector")
        if np.any(nu < 0) or not np.all(np.isfinite(nu)):
            raise WeightError("nu entries must be nonnegative and finite")
        if abs(nu.sum() - 1.0) > 1e-9:
            raise WeightError(f"nu must sum to 1 within 1e-9, got {nu.sum():.12f}")
        self.nu = nu

    def __len__(self):
        return len(self.nu)


def _gaussian(grid: np.ndarray, center: float, sigma: float) -> np.ndarray:
    z = (grid - center) / sigma
    return np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))


def _indices(x):
    return [int(i) for i in getattr(x, "indices", x)]


def build_importance(semantic, motion, params: KeyWeightParams, demo_len: int) -> ImportanceDistribution:
    """Gaussian-mixture importance over [0, demo_len), renormalized to 1.

    Every semantic key except the last contributes a narrow component with
    the subgoal weight; the last — the task-completion state — gets the
    heavier final weight. Motion keys contribute wide, light components.
    Intervals that produced no motion key simply contribute nothing; the
    global renormalization is the only redistribution.
    """
    sem = _indices(semantic)
    mot = _indices(motion) if motion is not None else []
    if not sem and not mot:
        raise WeightError("at least one key state is required")
    if demo_len < 1:
        raise WeightError("demo_len must be >= 1")
    for idx in sem + mot:
        if not (0 <= idx < demo_len):
            raise WeightError(f"key index {idx} outside [0, {demo_len})")

    grid = np.arange(demo_len, dtype=np.float64)
    density = np.zeros(demo_len)
    for pos, idx in enumerate(sem):
        amp = params.a_semantic_last if pos == len(sem) - 1 else params.a_semantic
        density += amp * _gaussian(grid, idx, params.sigma_semantic)
    for idx in mot:
        density += params.a_motion * _gaussian(grid, idx, params.sigma_motion)

    total = density.sum()
    if total <= 0:
        raise WeightError("mixture mass vanished on the grid")
    return ImportanceDistribution(nu=density / total)


def uniform_importance(demo_len: int) -> ImportanceDistribution:
    """The baseline: every demonstration state weighted 1/N."""
    if demo_len < 1:
        raise WeightError("demo_len must be >= 1")
    return ImportanceDistribution(nu=np.full(demo_len, 1.0 / demo_len))
