"""Online imitation training loop.

Starting from the cloned policy and a fresh critic, the loop alternates
environment rollouts (Gaussian exploration noise on the actions) with
transport-based relabeling at every episode end, buffer insertion, and
actor/critic updates on a fixed cadence once the seed-frame warm-up has
filled the buffer. The cloned policy itself collects the warm-up.

Determinism contract: a single seeded generator drives exploration noise,
episode spawn seeds and batch sampling; evaluation episodes use their own
fixed seed block. Identical (config, seed) runs therefore reproduce the
metrics log byte for byte. Checkpoints are cut only at episode boundaries,
right before the next reset draws from the generator, so a resumed run
continues exactly where the uninterrupted one would have gone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..envs import PickPlaceEnv, TaskSpec
from ..ot import OTConfig
from ..trajectory import State, Trajectory, TrajectoryMeta
from .bc import stack_features
from .nets import MLP, Adam
from .relabel import relabel_episode_best
from .replay import ReplayBuffer
from .updates import LambdaStrategy, UpdateError, actor_update, critic_update, lambda_value, soft_update

CHECKPOINT_FORMAT_VERSION = 1
EVAL_SEED_BASE = 2**31  # disjoint from training spawn seeds, which are < 2**31


class TrainingDiverged(Exception):
    pass


@dataclass
class OnlineTrainConfig:
    total_steps: int = 60000
    seed_frames: int = 12000
    update_every: int = 2
    batch_size: int = 256
    n_step: int = 3
    gamma: float = 0.99
    critic_tau: float = 0.01
    learning_rate: float = 1e-4
    hidden_dim: int = 1024
    hidden_layers: int = 2
    exploration_noise: float = 0.1
    buffer_capacity: int = 150000
    reward_scale: float = 10.0
    task_finish_bonus: float = 0.0
    alpha: float = 0.03
    lambda_strategy: LambdaStrategy = field(default_factory=LambdaStrategy)
    ot: OTConfig = field(default_factory=OTConfig)
    eval_every: int = 2000
    eval_episodes: int = 10
    frame_stack: int = 1
    action_repeat: int = 1
    feature_processor: str = "none"  # none | policy_hidden
    processor_update_every: int = 20000
    checkpoint_every: int = 0  # env steps between saves; 0 = final save only
    critic_output_scale: float = 0.0  # 0 -> fresh critic starts at Q == 0
    seed: int = 0


@dataclass
class MetricsLog:
    """Per-episode learner records plus the periodic evaluation curve."""

    episode_rows: list = field(default_factory=list)
    eval_rows: list = field(default_factory=list)

    EPISODE_HEADER = "step,episode,success,mean_reward,lambda,actor_loss,critic_loss"
    EVAL_HEADER = "step,success_rate"

    def episode_csv(self) -> str:
        lines = [self.EPISODE_HEADER]
        for step, ep, succ, rew, lam, al, cl in self.episode_rows:
            lines.append(f"{step},{ep},{int(succ)},{rew!r},{lam!r},{al!r},{cl!r}")
        return "\n".join(lines) + "\n"

    def eval_csv(self) -> str:
        lines = [self.EVAL_HEADER]
        for step, rate in self.eval_rows:
            lines.append(f"{step},{rate!r}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "episodes.csv").write_text(self.episode_csv())
        (out_dir / "eval.csv").write_text(self.eval_csv())

    @property
    def final_success_rate(self) -> float:
        return self.eval_rows[-1][1] if self.eval_rows else 0.0


@dataclass
class LearnerState:
    bc_policy: MLP
    policy: MLP
    critic: MLP
    target_critic: MLP
    actor_opt: Adam
    critic_opt: Adam
    buffer: ReplayBuffer
    rng: np.random.Generator
    env_steps: int = 0
    episodes: int = 0


class _Stacker:
    """Rolling concatenation of the last k feature vectors."""

    def __init__(self, k: int):
        self.k = k
        self.hist: list[np.ndarray] = []

    def reset(self, features: np.ndarray) -> np.ndarray:
        self.hist = [features] * self.k
        return self.view()

    def push(self, features: np.ndarray) -> np.ndarray:
        self.hist = (self.hist + [features])[-self.k :]
        return self.view()

    def view(self) -> np.ndarray:
        return np.concatenate(self.hist) if self.k > 1 else self.hist[-1]


def _policy_hidden_encoder(snapshot: MLP):
    w, b = snapshot.weights[0].copy(), snapshot.biases[0].copy()

    def encode(x: np.ndarray) -> np.ndarray:
        h = np.maximum(np.atleast_2d(x) @ w + b, 0.0)
        return h + 1e-6  # keep norms nonzero for the cosine cost

    return encode


def evaluate_policy(
    spec: TaskSpec,
    policy: MLP,
    episodes: int = 10,
    frame_stack: int = 1,
    action_repeat: int = 1,
    seed_base: int = EVAL_SEED_BASE,
) -> float:
    """Noise-free success rate over held-out spawn seeds."""
    env = PickPlaceEnv(spec, render_frames=False)
    stacker = _Stacker(frame_stack)
    successes = 0
    for i in range(episodes):
        obs = env.reset(seed_base + i)
        stacked = stacker.reset(obs.features)
        done = False
        while not done:
            action = np.clip(policy(stacked)[0], -1.0, 1.0)
            for _ in range(action_repeat):
                obs, done, success, _ = env.step(action)
                if done:
                    break
            stacked = stacker.push(obs.features)
        successes += int(env.success)
    return successes / episodes


def online_train(
    spec: TaskSpec,
    demos,
    nus,
    bc_policy: MLP,
    config: OnlineTrainConfig | None = None,
    out_dir=None,
    resume_from=None,
):
    """Run online fine-tuning; returns (LearnerState, MetricsLog).

    ``demos`` supply both the relabeling targets (paired with their
    importance distributions ``nus``) and the demo pairs for the actor's
    regression term. When ``out_dir`` is given, metrics CSVs and
    checkpoints are written there.
    """
    config = config or OnlineTrainConfig()
    if len(demos) != len(nus):
        raise ValueError(f"{len(demos)} demos but {len(nus)} importance distributions")
    pairs = list(zip(demos, nus))

    demo_obs_all = np.concatenate(
        [
            stack_features(d.features_matrix(), config.frame_stack)[
                [i for i, s in enumerate(d.states) if s.action is not None]
            ]
            for d in demos
        ]
    )
    demo_act_all = np.concatenate(
        [np.stack([s.action for s in d.states if s.action is not None]) for d in demos]
    )

    env = PickPlaceEnv(spec, render_frames=False)
    obs_dim = spec.feature_dim * config.frame_stack
    act_dim = spec.action_dim

    metrics = MetricsLog()
    if resume_from is not None:
        state, metrics = load_checkpoint(resume_from, config)
    else:
        rng = np.random.default_rng(config.seed)
        policy = bc_policy.copy()
        critic = MLP(
            obs_dim + act_dim,
            config.hidden_dim,
            1,
            rng,
            hidden_layers=config.hidden_layers,
            output_scale=config.critic_output_scale,
        )
        state = LearnerState(
            bc_policy=bc_policy.copy(),
            policy=policy,
            critic=critic,
            target_critic=critic.copy(),
            actor_opt=Adam(policy.params, lr=config.learning_rate),
            critic_opt=Adam(critic.params, lr=config.learning_rate),
            buffer=ReplayBuffer(config.buffer_capacity, obs_dim, act_dim),
            rng=rng,
        )

    encoder = None
    demo_feats_encoded = None

    def refresh_encoder():
        nonlocal encoder, demo_feats_encoded
        enc = _policy_hidden_encoder(state.policy)
        encoder = enc
        demo_feats_encoded = [
            enc(stack_features(d.features_matrix(), config.frame_stack)) for d in demos
        ]

    if config.feature_processor == "policy_hidden":
        refresh_encoder()
    elif config.feature_processor != "none":
        raise ValueError(f"unknown feature processor {config.feature_processor!r}")

    if not metrics.eval_rows:
        metrics.eval_rows.append(
            (
                0,
                evaluate_policy(
                    spec, state.policy, config.eval_episodes,
                    config.frame_stack, config.action_repeat,
                ),
            )
        )

    ckpt_path = Path(out_dir) / "checkpoint.npz" if out_dir is not None else None
    last_saved = state.env_steps

    stacker = _Stacker(config.frame_stack)
    last_lambda = 0.0
    last_actor_loss = 0.0
    last_critic_loss = 0.0
    needs_reset = True
    raw_feats: list[np.ndarray] = []
    stacked_feats: list[np.ndarray] = []
    actions: list[np.ndarray] = []

    while state.env_steps < config.total_steps:
        if needs_reset:
            obs = env.reset(int(state.rng.integers(0, 2**31)))
            raw_feats = [obs.features.copy()]
            stacked_feats = [stacker.reset(obs.features).copy()]
            actions = []
            needs_reset = False

        action = np.clip(
            state.policy(stacked_feats[-1])[0]
            + config.exploration_noise * state.rng.standard_normal(act_dim),
            -1.0,
            1.0,
        )
        done = False
        for _ in range(config.action_repeat):
            obs, done, _, _ = env.step(action)
            state.env_steps += 1
            if done or state.env_steps >= config.total_steps:
                break
        raw_feats.append(obs.features.copy())
        stacked_feats.append(stacker.push(obs.features).copy())
        actions.append(action)

        if (
            config.feature_processor == "policy_hidden"
            and state.env_steps % config.processor_update_every == 0
        ):
            refresh_encoder()

        episode_ended = done or state.env_steps >= config.total_steps
        if episode_ended:
            episode = Trajectory(
                [State(features=f) for f in raw_feats],
                TrajectoryMeta(task=spec.name, seed=0, success=env.success),
            )
            ep_feats = encoder(np.stack(stacked_feats)) if encoder is not None else None
            series = relabel_episode_best(
                episode,
                pairs,
                ot_config=config.ot,
                scale=config.reward_scale,
                bonus=config.task_finish_bonus,
                episode_features=ep_feats,
                demo_features_list=demo_feats_encoded,
            )
            rewards = series.values[1:]  # reward of each reached state
            state.buffer.add_episode(
                np.stack(stacked_feats), np.stack(actions), rewards, env.success
            )
            state.episodes += 1
            metrics.episode_rows.append(
                (
                    state.env_steps,
                    state.episodes,
                    int(env.success),
                    float(series.values.mean()),
                    float(last_lambda),
                    float(last_actor_loss),
                    float(last_critic_loss),
                )
            )
            needs_reset = True

        if (
            state.env_steps >= config.seed_frames
            and len(state.buffer) >= config.batch_size
            and state.env_steps % config.update_every == 0
        ):
            batch = state.buffer.sample_nstep(
                config.batch_size, config.n_step, config.gamma, state.rng
            )
            try:
                last_critic_loss = critic_update(
                    state.critic, state.target_critic, state.policy, state.critic_opt, batch
                )
                last_lambda = lambda_value(
                    config.lambda_strategy,
                    state.env_steps,
                    batch.obs,
                    state.bc_policy,
                    state.policy,
                    state.critic,
                )
                idx = state.rng.integers(0, len(demo_obs_all), size=config.batch_size)
                last_actor_loss = actor_update(
                    state.policy,
                    state.critic,
                    state.actor_opt,
                    batch.obs,
                    demo_obs_all[idx],
                    demo_act_all[idx],
                    last_lambda,
                    config.alpha,
                )
            except UpdateError as exc:
                raise TrainingDiverged(
                    f"step {state.env_steps}, episode {state.episodes}: {exc}"
                ) from exc
            if not np.isfinite(last_actor_loss):
                raise TrainingDiverged(
                    f"step {state.env_steps}: non-finite actor loss {last_actor_loss}"
                )
            soft_update(state.target_critic, state.critic, config.critic_tau)

        if state.env_steps % config.eval_every == 0:
            metrics.eval_rows.append(
                (
                    state.env_steps,
                    evaluate_policy(
                        spec, state.policy, config.eval_episodes,
                        config.frame_stack, config.action_repeat,
                    ),
                )
            )

        # checkpoints are cut only at episode boundaries, before the next reset
        if (
            ckpt_path is not None
            and config.checkpoint_every > 0
            and episode_ended
            and state.env_steps - last_saved >= config.checkpoint_every
        ):
            save_checkpoint(ckpt_path, state, metrics, config)
            last_saved = state.env_steps

    if out_dir is not None:
        out_dir = Path(out_dir)
        metrics.write(out_dir)
        save_checkpoint(out_dir / "checkpoint.npz", state, metrics, config)
    return state, metrics


def _net_arrays(prefix: str, net: MLP):
    return {f"{prefix}_p{i}": p for i, p in enumerate(net.params)}


def _load_net_params(prefix: str, net: MLP, data):
    net.set_params([data[f"{prefix}_p{i}"] for i in range(2 * len(net.weights))])


def save_checkpoint(path, state: LearnerState, metrics: MetricsLog, config: OnlineTrainConfig):
    """Parameters, optimizer state, buffer, RNG and metrics, versioned."""
    arrays = {}
    for name, net in (
        ("bc", state.bc_policy),
        ("policy", state.policy),
        ("critic", state.critic),
        ("tcritic", state.target_critic),
    ):
        arrays.update(_net_arrays(name, net))
    for name, opt in (("aopt", state.actor_opt), ("copt", state.critic_opt)):
        for i, a in enumerate(opt.state_arrays()):
            arrays[f"{name}_s{i}"] = a
    for key, val in state.buffer.state_arrays().items():
        arrays[f"buf_{key}"] = val
    arrays["ep_rows"] = np.array(metrics.episode_rows, dtype=np.float64).reshape(-1, 7)
    arrays["eval_rows"] = np.array(metrics.eval_rows, dtype=np.float64).reshape(-1, 2)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "env_steps": state.env_steps,
        "episodes": state.episodes,
        "actor_opt_t": state.actor_opt.t,
        "critic_opt_t": state.critic_opt.t,
        "rng_state": state.rng.bit_generator.state,
        "hidden_dim": config.hidden_dim,
        "hidden_layers": config.hidden_layers,
    }
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_checkpoint(path, config: OnlineTrainConfig):
    """Rebuild (LearnerState, MetricsLog) from a checkpoint file."""
    data = np.load(path)
    meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
    if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"checkpoint format version {meta['format_version']} != {CHECKPOINT_FORMAT_VERSION}"
        )
    obs_dim = int(data["buf_obs"].shape[1])
    act_dim = int(data["buf_actions"].shape[1])
    rng = np.random.default_rng(0)

    def build_net(prefix, in_dim, out_dim, out_act=None):
        net = MLP(
            in_dim,
            meta["hidden_dim"],
            out_dim,
            rng,
            hidden_layers=meta["hidden_layers"],
            output_activation=out_act,
        )
        _load_net_params(prefix, net, data)
        return net

    bc = build_net("bc", obs_dim, act_dim, "tanh")
    policy = build_net("policy", obs_dim, act_dim, "tanh")
    critic = build_net("critic", obs_dim + act_dim, 1)
    tcritic = build_net("tcritic", obs_dim + act_dim, 1)

    actor_opt = Adam(policy.params, lr=config.learning_rate)
    n = len(policy.params)
    actor_opt.load_state_arrays([data[f"aopt_s{i}"] for i in range(2 * n)], meta["actor_opt_t"])
    critic_opt = Adam(critic.params, lr=config.learning_rate)
    critic_opt.load_state_arrays([data[f"copt_s{i}"] for i in range(2 * n)], meta["critic_opt_t"])

    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, act_dim)
    buffer.load_state_arrays({k[4:]: data[k] for k in data.files if k.startswith("buf_")})

    gen = np.random.default_rng(0)
    gen.bit_generator.state = meta["rng_state"]

    state = LearnerState(
        bc_policy=bc,
        policy=policy,
        critic=critic,
        target_critic=tcritic,
        actor_opt=actor_opt,
        critic_opt=critic_opt,
        buffer=buffer,
        rng=gen,
        env_steps=int(meta["env_steps"]),
        episodes=int(meta["episodes"]),
    )
    metrics = MetricsLog(
        episode_rows=[
            (int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]), float(r[5]), float(r[6]))
            for r in data["ep_rows"]
        ],
        eval_rows=[(int(r[0]), float(r[1])) for r in data["eval_rows"]],
    )
    return state, metrics
