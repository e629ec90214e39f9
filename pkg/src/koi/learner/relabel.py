"""Episode relabeling: transport-based rewards plus the task-finish bonus.

Relabeling needs the whole episode (the coupling is between complete
trajectories), so it runs once per finished episode. Successful episodes
get the finish bonus added to every state's reward.
"""

from __future__ import annotations

import numpy as np

from ..ot import OTConfig, RewardSeries, cosine_cost_matrix, per_state_rewards, sinkhorn
from ..trajectory import Trajectory
from ..weights import ImportanceDistribution


def relabel_episode(
    episode: Trajectory,
    demo: Trajectory,
    nu: ImportanceDistribution,
    ot_config: OTConfig | None = None,
    scale: float = 10.0,
    bonus: float = 0.0,
    episode_features: np.ndarray | None = None,
    demo_features: np.ndarray | None = None,
) -> RewardSeries:
    """Per-state rewards for one exploration episode against one demo.

    The exploration marginal stays uniform; the demonstration marginal is
    the given importance distribution. Pre-encoded feature matrices may be
    passed to relabel under a feature processor.
    """
    ot_config = ot_config or OTConfig()
    expl = episode.features_matrix() if episode_features is None else episode_features
    dem = demo.features_matrix() if demo_features is None else demo_features
    if len(nu.nu) != len(dem):
        raise ValueError(f"nu has {len(nu.nu)} entries for a {len(dem)}-state demo")
    cost = cosine_cost_matrix(expl, dem)
    mu = np.full(len(expl), 1.0 / len(expl))
    plan = sinkhorn(
        cost,
        mu,
        nu.nu,
        epsilon=ot_config.epsilon,
        max_iters=ot_config.max_iters,
        tol=ot_config.tol,
    )
    series = per_state_rewards(plan, cost, scale)
    if bonus != 0.0 and episode.meta.success:
        series = RewardSeries(values=series.values + bonus, scale=series.scale, bonus=bonus)
    return series


def relabel_episode_best(episode, demo_nu_pairs, ot_config=None, scale=10.0, bonus=0.0,
                         episode_features=None, demo_features_list=None) -> RewardSeries:
    """Relabel against several demos and keep the closest (highest-reward) one."""
    best = None
    for k, (demo, nu) in enumerate(demo_nu_pairs):
        dem = None if demo_features_list is None else demo_features_list[k]
        series = relabel_episode(
            episode, demo, nu, ot_config, scale, bonus,
            episode_features=episode_features, demo_features=dem,
        )
        if best is None or series.values.sum() > best.values.sum():
            best = series
    if best is None:
        raise ValueError("no demonstrations to relabel against")
    return best
