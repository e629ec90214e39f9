"""Actor, critic and target updates for the online imitation learner.

The actor ascends a blend of the critic's value and a demo regression
penalty: (1 - lambda) * E[Q(s, pi(s))] - alpha * lambda * E||a_d - pi(s_d)||.
lambda comes from a strategy object — the batchwise Q-comparison indicator,
a linear decay schedule, or a constant — and always lands in [0, 1]. The
critic regresses on n-step targets assembled by the replay buffer, with the
current policy (no separate target actor) choosing the bootstrap action
against the target critic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import MLP, Adam, apply_mlp_step

LAMBDA_MODES = ("adaptive", "linear_decay", "fixed")


class UpdateError(Exception):
    pass


@dataclass
class LambdaStrategy:
    """How the demo-regression weight evolves.

    In adaptive mode the batch indicator fraction is used, optionally
    capped by the linear schedule (the decay then acts as a ceiling); in
    linear_decay mode the schedule alone governs; fixed mode pins a
    constant.
    """

    mode: str = "adaptive"
    start: float = 1.0
    end: float = 0.1
    steps: int = 20000
    constant: float = 0.9
    cap_with_schedule: bool = True

    def __post_init__(self):
        if self.mode not in LAMBDA_MODES:
            raise UpdateError(f"unknown lambda mode {self.mode!r}")
        for v in (self.start, self.end, self.constant):
            if not (0.0 <= v <= 1.0):
                raise UpdateError("lambda values must lie in [0, 1]")
        if self.steps < 1:
            raise UpdateError("schedule steps must be >= 1")

    def schedule_value(self, step: int) -> float:
        frac = min(max(step / self.steps, 0.0), 1.0)
        return self.start + (self.end - self.start) * frac


def lambda_value(
    strategy: LambdaStrategy,
    step: int,
    batch_obs: np.ndarray | None = None,
    pi_b: MLP | None = None,
    pi_e: MLP | None = None,
    critic: MLP | None = None,
) -> float:
    """Demo-regression weight in [0, 1] for this update step.

    Adaptive mode is the exact batch fraction of states where the cloned
    policy's action out-values the exploration policy's under the current
    critic — no approximation, so a 3-of-4 batch gives exactly 0.75.
    """
    if strategy.mode == "fixed":
        return float(strategy.constant)
    if strategy.mode == "linear_decay":
        return float(strategy.schedule_value(step))
    if batch_obs is None or len(batch_obs) == 0:
        raise UpdateError("adaptive lambda needs a non-empty batch")
    q_b = critic(np.concatenate([batch_obs, pi_b(batch_obs)], axis=1))
    q_e = critic(np.concatenate([batch_obs, pi_e(batch_obs)], axis=1))
    frac = float(np.mean(q_b[:, 0] > q_e[:, 0]))
    if strategy.cap_with_schedule:
        frac = min(frac, strategy.schedule_value(step))
    return frac


def actor_update(
    policy: MLP,
    critic: MLP,
    optimizer: Adam,
    expl_obs: np.ndarray,
    demo_obs: np.ndarray,
    demo_actions: np.ndarray,
    lam: float,
    alpha: float,
) -> float:
    """One ascent step on the blended actor objective; returns the loss.

    At lam = 1 the value term vanishes and the step is pure demo
    regression; at lam = 0 it is the plain deterministic policy gradient
    through the critic. The critic's parameters are left untouched — only
    its action gradient is consumed.
    """
    if not (0.0 <= lam <= 1.0):
        raise UpdateError(f"lambda {lam} outside [0, 1]")
    n_expl = len(expl_obs)
    n_demo = len(demo_obs)

    # value term: d/d_params of -(1-lam) * mean Q(s, pi(s))
    actions = policy.forward(expl_obs, cache=True)
    q_in = np.concatenate([expl_obs, actions], axis=1)
    q = critic.forward(q_in, cache=True)
    _, dq_in = critic.backward(np.full_like(q, -(1.0 - lam) / n_expl))
    value_grads, _ = policy.backward(dq_in[:, expl_obs.shape[1]:])

    # regression term: d/d_params of alpha * lam * mean ||a_d - pi(s_d)||
    pred = policy.forward(demo_obs, cache=True)
    diff = pred - demo_actions
    norms = np.linalg.norm(diff, axis=1, keepdims=True)
    safe = np.maximum(norms, 1e-12)
    bc_grads, _ = policy.backward(alpha * lam * diff / safe / n_demo)

    grads = [vg + bg for vg, bg in zip(value_grads, bc_grads)]
    apply_mlp_step(policy, optimizer, grads)
    return float(-(1.0 - lam) * np.mean(q) + alpha * lam * np.mean(norms))


def critic_update(
    critic: MLP,
    target_critic: MLP,
    policy: MLP,
    optimizer: Adam,
    batch,
    nan_guard: bool = True,
) -> float:
    """One regression step of Q toward the n-step bootstrap target."""
    boot_actions = policy(batch.bootstrap_obs)
    boot_q = target_critic(np.concatenate([batch.bootstrap_obs, boot_actions], axis=1))[:, 0]
    targets = batch.reward_sums + batch.gamma_pows * boot_q

    q = critic.forward(np.concatenate([batch.obs, batch.actions], axis=1), cache=True)
    err = q[:, 0] - targets
    loss = float(np.mean(err**2))
    if nan_guard and not np.isfinite(loss):
        raise UpdateError(f"non-finite critic loss {loss}")
    grads, _ = critic.backward((2.0 * err / len(err))[:, None])
    apply_mlp_step(critic, optimizer, grads)
    return loss


def soft_update(target: MLP, online: MLP, rate: float):
    """target <- (1 - rate) * target + rate * online, elementwise."""
    if not (0.0 < rate <= 1.0):
        raise UpdateError(f"soft-update rate {rate} outside (0, 1]")
    t_params = target.params
    o_params = online.params
    if len(t_params) != len(o_params):
        raise UpdateError("parameter structure mismatch")
    for t, o in zip(t_params, o_params):
        if t.shape != o.shape:
            raise UpdateError(f"parameter shape mismatch: {t.shape} vs {o.shape}")
        t *= 1.0 - rate
        t += rate * o
