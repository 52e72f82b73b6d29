"""Off-policy actor-critic training with per-episode parameter-space noise.

At the start of every episode the actor's weights are perturbed by a noise
vector drawn from the current :class:`~paramnoise.noise.NoiseDistribution`;
the perturbed copy acts for the whole episode. After every K episodes the
distribution is updated from the window's noises and returns. The actor and
critic are trained from replay with one gradient step per environment step
once the warm-up is over.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from paramnoise import mvn, noise
from paramnoise.envs import Env, make_env
from paramnoise.noise import NoiseDistribution, NoiseHyper, Strategy
from paramnoise.rl.memory import ReplayBuffer, RunningNormalizer
from paramnoise.rl.nets import Adam, CriticNet, PolicyNet, soft_update

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    env: str = "sparse-cartpole-swingup"
    env_overrides: dict = field(default_factory=dict)
    strategy: str = "pro"
    seed: int = 0
    epochs: int = 20
    episodes_per_epoch: int = 10
    hidden: tuple[int, int] = (64, 64)
    layer_norm: bool = True
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.01
    batch: int = 64
    critic_l2: float = 1e-2
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    train_every: int = 1
    h: float = 8.0
    h2: float = 10.0
    K: int = 10
    sigma_init: float | None = None  # 0.2 dense, 0.6 sparse
    delta: float | None = None  # defaults to sigma_init
    distance_batch: int = 64
    eval_clean: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(x) for x in self.hidden)
        self.strategy = Strategy.parse(self.strategy).value

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        for name in ("epochs", "warmup_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("episodes_per_epoch", "batch", "buffer_capacity", "train_every", "distance_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError("hidden must name two positive layer widths")
        self.noise_hyper()

    @property
    def sparse(self) -> bool:
        return self.env.startswith("sparse-")

    def resolved_sigma(self) -> float:
        if self.sigma_init is not None:
            return self.sigma_init
        return 0.6 if self.sparse else 0.2

    def noise_hyper(self) -> NoiseHyper:
        sigma = self.resolved_sigma()
        delta = self.delta if self.delta is not None else sigma
        return NoiseHyper(h=self.h, h2=self.h2, K=self.K, delta=delta, sigma_init=sigma)


@dataclass
class EpochRecord:
    epoch: int
    mean_return_perturbed: float
    mean_return_clean: float
    nonzero_episodes: int

    FIELDS = ("epoch", "mean_return_perturbed", "mean_return_clean", "nonzero_episodes")


@dataclass
class TrainResult:
    curve: list[EpochRecord]
    logs: list[noise.ExplorationLog]
    episode_returns: list[float]
    state: "TrainState"


class TrainState:
    """Everything that evolves during training."""

    def __init__(self, config: TrainConfig, env: Env):
        config.validate()
        self.config = config
        root = mvn.make_rng(config.seed)
        self.init_rng, self.env_rng, self.noise_rng, self.replay_rng = mvn.spawn(root, 4)
        s, a = env.spec.state_dim, env.spec.action_dim
        h1, h2 = config.hidden
        self.actor = PolicyNet.init((s, h1, h2, a), env.limit, self.init_rng, config.layer_norm)
        self.critic = CriticNet.init((s, h1, h2), a, self.init_rng, config.layer_norm)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params.size, config.lr_actor)
        self.critic_opt = Adam(self.critic.params.size, config.lr_critic)
        self.l2_mask = self.critic.hidden_weight_mask() * config.critic_l2
        self.buffer = ReplayBuffer(config.buffer_capacity, s, a)
        self.normalizer = RunningNormalizer(s)
        self.hyper = config.noise_hyper()
        strategy = Strategy.parse(config.strategy)
        self.dist = NoiseDistribution.initial(
            self.actor.n_perturb, self.hyper.sigma_init, noise.strategy_alpha(strategy)
        )
        self.env_steps = 0
        self.train_steps = 0
        self.windows = 0


def critic_loss_grad(critic: CriticNet, s, u, y, l2_mask: np.ndarray) -> tuple[float, np.ndarray]:
    """``mean((Q(s, u) - y)**2) + 0.5 * sum(l2_mask * params**2)`` and its gradient."""
    q, cache = critic.forward(s, u)
    err = q - y
    grad, _ = critic.backward(cache, 2.0 * err / len(y))
    grad += l2_mask * critic.params
    p = critic.params
    return float(np.mean(err * err) + 0.5 * np.sum(l2_mask * p * p)), grad


def actor_loss_grad(actor: PolicyNet, critic: CriticNet, s) -> tuple[float, np.ndarray]:
    """``-mean(Q(s, actor(s)))`` and its gradient with respect to the actor."""
    u, a_cache = actor.forward(s)
    q, q_cache = critic.forward(s, u)
    _, dq_du = critic.backward(q_cache, np.full(len(q), -1.0 / len(q)))
    return float(-np.mean(q)), actor.backward(a_cache, dq_du)


def train_step(state: TrainState, norm) -> dict:
    """One critic and one actor Adam step on a replay batch, then soft target updates."""
    c = state.config
    s, u, r, s2, done = state.buffer.sample(c.batch, state.replay_rng)
    s, s2 = norm(s), norm(s2)

    y = r + c.gamma * (1.0 - done) * state.critic_target(s2, state.actor_target.unit(s2))
    critic_loss, grad = critic_loss_grad(state.critic, s, u, y, state.l2_mask)
    state.critic_opt.step(state.critic.params, grad)

    actor_loss, grad = actor_loss_grad(state.actor, state.critic, s)
    state.actor_opt.step(state.actor.params, grad)

    soft_update(state.actor_target, state.actor, c.tau)
    soft_update(state.critic_target, state.critic, c.tau)
    state.train_steps += 1
    return {"critic_loss": critic_loss, "actor_loss": actor_loss}


def window_distance(actor: PolicyNet, noises: np.ndarray, states: np.ndarray) -> float:
    """Mean action-space distance between the actor and its perturbations by each row of ``noises``."""
    return float(np.mean([noise.policy_distance(actor, actor.perturbed(e), states) for e in noises]))


def rollout(env: Env, policy: PolicyNet, norm, rng, on_step: Callable | None = None) -> float:
    obs = env.reset(rng)
    ret = 0.0
    done = False
    while not done:
        u = policy.unit(norm(obs))[0]
        next_obs, r, done = env.step(u * policy.limit)
        if on_step is not None:
            on_step(obs, u, r, next_obs, env.terminated)
        ret += r
        obs = next_obs
    return ret


def run_training(config: TrainConfig, env: Env | None = None, progress: Callable | None = None) -> TrainResult:
    """Train for ``config.epochs`` epochs and return the learning curve and exploration logs.

    The curve's ``mean_return_perturbed`` averages the returns of the
    perturbed episodes of each epoch; ``mean_return_clean`` is one episode of
    the unperturbed actor when ``eval_clean`` is set, NaN otherwise.
    """
    env = env if env is not None else make_env(config.env, config.env_overrides)
    st = TrainState(config, env)
    c = config
    strategy = Strategy.parse(c.strategy)
    eval_env = make_env(c.env, c.env_overrides) if c.eval_clean else None
    eval_rng = mvn.spawn(st.env_rng, 1)[0] if c.eval_clean else None

    curve, logs, episode_returns = [], [], []
    window_eps = mvn.sample_mvn(noise.noise_factor(st.dist), st.noise_rng, c.K) if c.epochs else None
    window_returns: list[float] = []

    for epoch in range(c.epochs):
        epoch_returns = []
        for _ in range(c.episodes_per_epoch):
            eps = window_eps[len(window_returns)]
            perturbed = st.actor.perturbed(eps)
            norm = st.normalizer.snapshot()
            seen = []

            def on_step(obs, u, r, next_obs, terminal):
                st.buffer.add(obs, u, r, next_obs, terminal)  # time limits are not terminal
                seen.append(obs)
                st.env_steps += 1
                if st.env_steps > c.warmup_steps and len(st.buffer) >= c.batch and st.env_steps % c.train_every == 0:
                    train_step(st, norm)

            ret = rollout(env, perturbed, norm, st.env_rng, on_step)
            st.normalizer.update(np.array(seen))
            epoch_returns.append(ret)
            episode_returns.append(ret)
            window_returns.append(ret)

            if len(window_returns) == c.K:
                d = None
                if len(st.buffer) >= c.distance_batch:
                    idx = st.buffer.sample_indices(c.distance_batch, st.replay_rng)
                    d = window_distance(st.actor, window_eps, st.normalizer.snapshot()(st.buffer.state[idx]))
                st.dist, log = noise.window_update(
                    st.dist, window_eps, np.array(window_returns), d, st.hyper, strategy, st.windows
                )
                logs.append(log)
                st.windows += 1
                window_eps = mvn.sample_mvn(noise.noise_factor(st.dist), st.noise_rng, c.K)
                window_returns = []

        clean = math.nan
        if eval_env is not None:
            clean = rollout(eval_env, st.actor, st.normalizer.snapshot(), eval_rng)
        rec = EpochRecord(epoch, float(np.mean(epoch_returns)), clean, int(sum(r != 0 for r in epoch_returns)))
        curve.append(rec)
        if progress is not None:
            progress(rec, logs)
    return TrainResult(curve, logs, episode_returns, st)


def write_curve(path, curve: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EpochRecord.FIELDS)
        for r in curve:
            w.writerow([r.epoch, f"{r.mean_return_perturbed:.9g}", f"{r.mean_return_clean:.9g}", r.nonzero_episodes])


def read_curve(path) -> list[EpochRecord]:
    with open(path, newline="") as f:
        return [
            EpochRecord(int(r["epoch"]), float(r["mean_return_perturbed"]), float(r["mean_return_clean"]), int(r["nonzero_episodes"]))
            for r in csv.DictReader(f)
        ]


# Checkpoints are .npz archives: one float64 array per parameter/optimizer
# vector plus a JSON string holding the config, counters and RNG states.


def _encode(obj):
    """JSON-safe copy of a bit-generator state (numpy arrays become tagged lists)."""
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": obj.dtype.str}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    return obj


def save_checkpoint(path, st: TrainState) -> None:
    arrays = {
        "actor": st.actor.params,
        "critic": st.critic.params,
        "actor_target": st.actor_target.params,
        "critic_target": st.critic_target.params,
        "actor_adam_m": st.actor_opt.m,
        "actor_adam_v": st.actor_opt.v,
        "critic_adam_m": st.critic_opt.m,
        "critic_adam_v": st.critic_opt.v,
        "norm_mean": st.normalizer.mean,
        "norm_m2": st.normalizer.m2,
        "big_sigma": st.dist.big_sigma,
    }
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(st.config),
        "norm_count": st.normalizer.count,
        "adam_t": [st.actor_opt.t, st.critic_opt.t],
        "sigma": st.dist.sigma.hex(),
        "alpha": float(st.dist.alpha).hex(),
        "counters": [st.env_steps, st.train_steps, st.windows],
        "rng": [_encode(g.bit_generator.state) for g in (st.init_rng, st.env_rng, st.noise_rng, st.replay_rng)],
    }
    if hasattr(path, "write"):
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
        return
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, env: Env | None = None) -> TrainState:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        names = {f.name for f in fields(TrainConfig)}
        config = TrainConfig(**{k: v for k, v in meta["config"].items() if k in names})
        env = env if env is not None else make_env(config.env, config.env_overrides)
        st = TrainState(config, env)
        for name, net in (
            ("actor", st.actor), ("critic", st.critic), ("actor_target", st.actor_target), ("critic_target", st.critic_target)
        ):
            net.params[...] = z[name]
        st.actor_opt.m[...], st.actor_opt.v[...] = z["actor_adam_m"], z["actor_adam_v"]
        st.critic_opt.m[...], st.critic_opt.v[...] = z["critic_adam_m"], z["critic_adam_v"]
        st.normalizer.mean, st.normalizer.m2 = z["norm_mean"].copy(), z["norm_m2"].copy()
        st.dist = NoiseDistribution(float.fromhex(meta["sigma"]), z["big_sigma"].copy(), float.fromhex(meta["alpha"]))
    st.normalizer.count = meta["norm_count"]
    st.actor_opt.t, st.critic_opt.t = meta["adam_t"]
    st.env_steps, st.train_steps, st.windows = meta["counters"]
    for g, s in zip((st.init_rng, st.env_rng, st.noise_rng, st.replay_rng), meta["rng"]):
        g.bit_generator.state = _decode(s)
    return st
