from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteActionError(ValueError):
    pass


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_limit: tuple[float, ...]
    horizon: int = 500
    dt: float = 0.02
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.action_limit) != self.action_dim or min(self.action_limit) <= 0:
            raise ValueError("one positive action limit per action dimension is required")


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def clip(v: float, bound: float) -> float:
    return -bound if v < -bound else bound if v > bound else v


class Env:
    """Episodic continuous-control task with a dense and a sparse reward.

    Subclasses hold their physical state as a float64 array ``self.state`` and
    implement ``_integrate``, ``observe``, ``dense_reward`` and ``success``.
    The sparse reward is 1 on steps where ``success`` holds and 0 otherwise.
    """

    defaults: dict = {}
    state_dim = 0
    action_dim = 1

    def __init__(self, sparse: bool = False, horizon: int = 500, dt: float | None = None, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise TypeError(f"unknown parameters for {type(self).__name__}: {sorted(unknown)}")
        self.p = {**self.defaults, **params}
        self.sparse = sparse
        self.spec = EnvSpec(
            name=self.name(sparse),
            state_dim=self.state_dim,
            action_dim=self.action_dim,
            action_limit=tuple(float(x) for x in np.broadcast_to(self.p["action_limit"], (self.action_dim,))),
            horizon=horizon,
            dt=dt if dt is not None else self.default_dt,
            params=dict(self.p),
        )
        self.limit = np.array(self.spec.action_limit)
        self.state = self.rest_state()
        self.t = 0
        self.terminated = False

    default_dt = 0.02
    base_name = "env"

    @classmethod
    def name(cls, sparse: bool) -> str:
        return ("sparse-" if sparse else "") + cls.base_name

    def rest_state(self) -> np.ndarray:
        raise NotImplementedError

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = self.initial_state(rng)
        self.t = 0
        self.terminated = False
        return self.observe()

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def set_state(self, state, t: int = 0) -> np.ndarray:
        self.state = np.array(state, dtype=float)
        self.t = t
        self.terminated = False
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        """Advance one control step and return ``(observation, reward, done)``.

        ``done`` is set at the horizon or when the task terminates early; in
        the latter case ``self.terminated`` is also set, so learners can tell
        a true terminal state from a time limit.
        """
        if self.terminated or self.t >= self.spec.horizon:
            raise RuntimeError("episode is over; call reset()")
        a = np.asarray(action, dtype=float).reshape(self.action_dim)
        if not np.all(np.isfinite(a)):
            raise NonFiniteActionError("action contains NaN or inf")
        a = np.clip(a, -self.limit, self.limit)
        self.state = self._integrate(self.state, a)
        self.t += 1
        reward = float(self.success(self.state)) if self.sparse else self.dense_reward(self.state, a)
        self.terminated = self.is_terminal(self.state)
        return self.observe(), reward, self.terminated or self.t >= self.spec.horizon

    def is_terminal(self, state: np.ndarray) -> bool:
        """Task-specific early termination; none by default."""
        return False

    def _integrate(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError

    def dense_reward(self, state: np.ndarray, action: np.ndarray) -> float:
        raise NotImplementedError

    def success(self, state: np.ndarray) -> bool:
        raise NotImplementedError

    def energy(self, state: np.ndarray) -> float:
        """Total mechanical energy, where the task defines one."""
        raise NotImplementedError
