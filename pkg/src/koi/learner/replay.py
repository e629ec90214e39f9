"""Replay buffer with episode-aware n-step target assembly.

Episodes are inserted whole (rewards are relabeled at episode end, so
nothing is sampleable earlier) and stay contiguous in storage; n-step
windows are cut at the inserting episode's end, so targets never mix
transitions across episode boundaries. When the buffer is full, the oldest
episodes are evicted whole.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class ReplayError(Exception):
    pass


@dataclass
class NStepBatch:
    obs: np.ndarray
    actions: np.ndarray
    reward_sums: np.ndarray  # sum_{k<n'} gamma^k r_{t+k}
    bootstrap_obs: np.ndarray  # state at t + n'
    gamma_pows: np.ndarray  # gamma^{n'}, zeroed when the window hit a terminal
    indices: np.ndarray


@dataclass
class _EpisodeRecord:
    start: int
    length: int


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ReplayError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.ep_end = np.zeros(capacity, dtype=np.int64)  # last index of own episode
        self._episodes: deque[_EpisodeRecord] = deque()
        self._write = 0
        self._size = 0
        self._valid_cache: np.ndarray | None = None

    def __len__(self):
        return self._size

    def _evict_overlapping(self, start: int, length: int):
        lo, hi = start, start + length
        while self._episodes:
            ep = self._episodes[0]
            if ep.start + ep.length <= lo or ep.start >= hi:
                break
            self._episodes.popleft()
            self._size -= ep.length

    def add_episode(self, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray, success: bool):
        """Insert one finished episode.

        ``states`` has L+1 rows, ``actions`` and ``rewards`` have L. The
        final transition is terminal iff the episode ended in success;
        timeouts keep their bootstrap.
        """
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        rewards = np.asarray(rewards, dtype=np.float64)
        length = len(actions)
        if length < 1 or len(states) != length + 1 or len(rewards) != length:
            raise ReplayError(
                f"inconsistent episode: {len(states)} states, {length} actions, {len(rewards)} rewards"
            )
        if length > self.capacity:
            raise ReplayError(f"episode of {length} transitions exceeds capacity {self.capacity}")
        if self._write + length > self.capacity:
            # wrap whole episodes to keep them contiguous; orphan the tail
            self._evict_overlapping(self._write, self.capacity - self._write)
            self._write = 0
        start = self._write
        self._evict_overlapping(start, length)
        sl = slice(start, start + length)
        self.obs[sl] = states[:-1]
        self.actions[sl] = actions
        self.rewards[sl] = rewards
        self.next_obs[sl] = states[1:]
        self.terminal[sl] = False
        self.terminal[start + length - 1] = bool(success)
        self.ep_end[sl] = start + length - 1
        self._episodes.append(_EpisodeRecord(start=start, length=length))
        self._write = start + length
        self._size += length
        self._valid_cache = None

    def valid_indices(self) -> np.ndarray:
        if self._valid_cache is None:
            parts = [np.arange(ep.start, ep.start + ep.length) for ep in self._episodes]
            self._valid_cache = (
                np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
            )
        return self._valid_cache

    def sample_nstep(self, batch_size: int, n: int, gamma: float, rng: np.random.Generator) -> NStepBatch:
        valid = self.valid_indices()
        if len(valid) == 0:
            raise ReplayError("buffer is empty")
        t = valid[rng.integers(0, len(valid), size=batch_size)]
        return self.assemble_nstep(t, n, gamma)

    def assemble_nstep(self, t: np.ndarray, n: int, gamma: float) -> NStepBatch:
        """n-step sums and bootstrap states for transition indices ``t``."""
        t = np.asarray(t, dtype=np.int64)
        remaining = self.ep_end[t] - t + 1
        n_eff = np.minimum(n, remaining)
        ks = np.arange(n)
        idx = np.minimum(t[:, None] + ks[None, :], self.ep_end[t][:, None])
        mask = ks[None, :] < n_eff[:, None]
        reward_sums = ((gamma**ks)[None, :] * self.rewards[idx] * mask).sum(axis=1)
        boot = t + n_eff - 1
        cut = self.terminal[boot]
        gamma_pows = np.where(cut, 0.0, gamma**n_eff.astype(np.float64))
        return NStepBatch(
            obs=self.obs[t],
            actions=self.actions[t],
            reward_sums=reward_sums,
            bootstrap_obs=self.next_obs[boot],
            gamma_pows=gamma_pows,
            indices=t,
        )

    def state_arrays(self):
        eps = np.array([[ep.start, ep.length] for ep in self._episodes], dtype=np.int64)
        if eps.size == 0:
            eps = eps.reshape(0, 2)
        return {
            "obs": self.obs,
            "actions": self.actions,
            "rewards": self.rewards,
            "next_obs": self.next_obs,
            "terminal": self.terminal,
            "ep_end": self.ep_end,
            "episodes": eps,
            "cursor": np.array([self._write, self._size], dtype=np.int64),
        }

    def load_state_arrays(self, arrays):
        self.obs = np.array(arrays["obs"])
        self.actions = np.array(arrays["actions"])
        self.rewards = np.array(arrays["rewards"])
        self.next_obs = np.array(arrays["next_obs"])
        self.terminal = np.array(arrays["terminal"])
        self.ep_end = np.array(arrays["ep_end"])
        self._episodes = deque(
            _EpisodeRecord(start=int(s), length=int(l)) for s, l in arrays["episodes"]
        )
        self._write, self._size = (int(x) for x in arrays["cursor"])
        self._valid_cache = None
