"""Replay storage and online observation statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BufferTooSmallError(ValueError):
    pass


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling.

    Actions are stored as the actor's unit outputs in [-1, 1].
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.state = np.zeros((capacity, state_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_state = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward: float, next_state, done: bool) -> None:
        i = self.pos
        self.state[i] = state
        self.action[i] = action
        self.reward[i] = reward
        self.next_state[i] = next_state
        self.done[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Transition(
            self.state[i].copy(), self.action[i].copy(), float(self.reward[i]), self.next_state[i].copy(), bool(self.done[i])
        )

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch:
            raise BufferTooSmallError(f"buffer holds {self.size} transitions, batch needs {batch}")
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: np.random.Generator):
        """Return ``(state, action, reward, next_state, done)`` arrays of length ``batch``."""
        idx = self.sample_indices(batch, rng)
        return self.state[idx], self.action[idx], self.reward[idx], self.next_state[idx], self.done[idx]


class RunningNormalizer:
    """Per-dimension running mean and (population) variance.

    Batches are merged with the parallel form of Welford's update, so the
    stored moments equal the batch moments of everything seen so far.
    """

    def __init__(self, dim: int, clip: float = 5.0, eps: float = 1e-8):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.clip = clip
        self.eps = eps

    @property
    def var(self) -> np.ndarray:
        return self.m2 / self.count if self.count else np.ones_like(self.m2)

    def update(self, x) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_m2 = ((x - b_mean) ** 2).sum(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta * delta * (self.count * n / total)
        self.count = total

    def snapshot(self) -> "FrozenNormalizer":
        return FrozenNormalizer(self.mean.copy(), np.sqrt(self.var + self.eps), self.clip)


@dataclass(frozen=True)
class FrozenNormalizer:
    mean: np.ndarray
    std: np.ndarray
    clip: float

    def __call__(self, x) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=float) - self.mean) / self.std, -self.clip, self.clip)
