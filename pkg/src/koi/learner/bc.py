"""Behavior cloning: squared-error regression of demo actions on states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..trajectory import Trajectory
from .nets import MLP, SGD, Adam, apply_mlp_step


class BCError(Exception):
    pass


@dataclass
class BCConfig:
    steps: int = 5000
    batch_size: int = 256
    learning_rate: float = 1e-4
    hidden_dim: int = 1024
    hidden_layers: int = 2
    seed: int = 0
    frame_stack: int = 1
    optimizer: str = "adam"


def stack_features(features: np.ndarray, k: int) -> np.ndarray:
    """Rows of the last k feature vectors concatenated, edge-padded at t=0."""
    if k <= 1:
        return features
    parts = []
    for offset in range(k - 1, -1, -1):
        idx = np.maximum(np.arange(len(features)) - offset, 0)
        parts.append(features[idx])
    return np.concatenate(parts, axis=1)


def demo_dataset(demos, frame_stack: int = 1):
    """All (state, action) pairs from the demos, feature-stacked if asked."""
    xs, ys = [], []
    for demo in demos:
        feats = stack_features(demo.features_matrix(), frame_stack)
        idx = [i for i, s in enumerate(demo.states) if s.action is not None]
        if not idx:
            raise BCError(f"demo {demo.meta.seed} carries no actions")
        xs.append(feats[idx])
        ys.append(np.stack([demo.states[i].action for i in idx]))
    return np.concatenate(xs), np.concatenate(ys)


def bc_loss(policy: MLP, obs: np.ndarray, actions: np.ndarray) -> float:
    """Mean squared action error: E ||a_d - pi(s_d)||^2."""
    diff = policy(obs) - actions
    return float(np.mean(np.sum(diff**2, axis=1)))


def bc_step(policy: MLP, optimizer: Adam, obs: np.ndarray, actions: np.ndarray) -> float:
    pred = policy.forward(obs, cache=True)
    diff = pred - actions
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    grads, _ = policy.backward(2.0 * diff / len(obs))
    apply_mlp_step(policy, optimizer, grads)
    return loss


def train_bc(demos: list[Trajectory], config: BCConfig | None = None) -> MLP:
    """Fit the cloning policy by minibatch gradient descent on demo pairs."""
    config = config or BCConfig()
    if not demos:
        raise BCError("no demonstrations given")
    obs, actions = demo_dataset(demos, config.frame_stack)
    rng = np.random.default_rng(config.seed)
    policy = MLP(
        obs.shape[1],
        config.hidden_dim,
        actions.shape[1],
        rng,
        hidden_layers=config.hidden_layers,
        output_activation="tanh",
    )
    if config.optimizer == "sgd":
        optimizer = SGD(policy.params, lr=config.learning_rate)
    else:
        optimizer = Adam(policy.params, lr=config.learning_rate)
    n = len(obs)
    for _ in range(config.steps):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        bc_step(policy, optimizer, obs[idx], actions[idx])
    return policy
