"""Two-parameter optimization benchmark for comparing noise strategies.

A "policy" is just a point ``theta`` in the plane. Each episode evaluates the
reward at a perturbed point; after K episodes ``theta`` takes a gradient step
averaged over the perturbed points. One step is one such update (K episodes).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from paramnoise import mvn
from paramnoise.noise import (
    ExplorationLog,
    NoiseDistribution,
    NoiseHyper,
    Strategy,
    noise_factor,
    sigma_bar,
    strategy_alpha,
    window_update,
)

SPARSE_RADIUS_SQ = 6.25  # reward support ||theta - c|| <= 2.5
MOVE_THRESHOLD = 1e-12


class ConfigInvalidError(ValueError):
    pass


def reward_dense(theta, c) -> np.ndarray | float:
    sq = np.sum((np.asarray(theta, dtype=float) - np.asarray(c, dtype=float)) ** 2, axis=-1)
    return np.exp(-sq)


def reward_sparse(theta, c, radius_sq: float = SPARSE_RADIUS_SQ) -> np.ndarray | float:
    sq = np.sum((np.asarray(theta, dtype=float) - np.asarray(c, dtype=float)) ** 2, axis=-1)
    return np.where(sq <= radius_sq, np.exp(-sq), 0.0)


def reward_gradient(theta, c, sparse: bool, radius_sq: float = SPARSE_RADIUS_SQ) -> np.ndarray:
    """Analytic gradient of the reward; zero outside the sparse support."""
    diff = np.asarray(theta, dtype=float) - np.asarray(c, dtype=float)
    sq = np.sum(diff**2, axis=-1, keepdims=True)
    g = -2.0 * diff * np.exp(-sq)
    if sparse:
        g = np.where(sq <= radius_sq, g, 0.0)
    return g


@dataclass
class ToyConfig:
    strategy: Strategy = Strategy.PRO
    sparse: bool = False
    sigma_fix_sq: float = 1.0
    K: int = 10
    lr: float = 0.05
    h: float = 8.0
    h2: float = 10.0
    max_steps: int = 50_000  # parameter updates, K episodes each
    tol: float = 0.01
    seed: int = 0
    theta_init: tuple[float, float] = (0.0, 0.0)
    c: tuple[float, float] = (3.0, 3.0)
    sparse_radius_sq: float = SPARSE_RADIUS_SQ
    record_trajectory: bool = False

    def validate(self) -> None:
        try:
            self.strategy = Strategy.parse(self.strategy)
        except ValueError as e:
            raise ConfigInvalidError(str(e)) from None
        if self.strategy is Strategy.PLAPPERT:
            raise ConfigInvalidError("the 2-D benchmark has no action space; use fv, ac or pro")
        if not self.tol > 0:
            raise ConfigInvalidError("tol must be positive")
        if self.lr < 0:
            raise ConfigInvalidError("lr must be non-negative")
        if self.K < 1:
            raise ConfigInvalidError("K must be at least 1")
        if not self.sigma_fix_sq > 0:
            raise ConfigInvalidError("sigma_fix_sq must be positive")
        if self.max_steps < 1:
            raise ConfigInvalidError("max_steps must be at least 1")
        if len(self.theta_init) != 2 or len(self.c) != 2:
            raise ConfigInvalidError("theta_init and c must be 2-vectors")


@dataclass
class ToyResult:
    seed: int
    moved: bool
    optimized: bool
    steps_to_optimize: int | None
    final_distance: float
    steps: int
    first_reward_window: int | None
    logs: list[ExplorationLog] = field(default_factory=list)
    trajectory: list[tuple[np.ndarray, np.ndarray]] | None = None


def run_toy(config: ToyConfig) -> ToyResult:
    """Run one seed until ``theta`` is within ``tol`` of ``c`` or ``max_steps`` updates pass."""
    config.validate()
    strategy = config.strategy
    K = config.K
    rng = mvn.make_rng(config.seed)
    c = np.asarray(config.c, dtype=float)
    theta0 = np.asarray(config.theta_init, dtype=float)
    theta = theta0.copy()
    sigma_fix = math.sqrt(config.sigma_fix_sq)
    # sigma is never adapted here; delta only satisfies the hyper contract
    hyper = NoiseHyper(h=config.h, h2=config.h2, K=K, delta=1.0, sigma_init=sigma_fix)
    dist = NoiseDistribution.initial(2, sigma_fix, alpha=strategy_alpha(strategy))
    radius_sq = config.sparse_radius_sq
    adaptive = strategy is not Strategy.FV
    L = noise_factor(dist)

    step = 0
    moved = False
    first_reward = None
    logs: list[ExplorationLog] = []
    trajectory = [] if config.record_trajectory else None
    distance = float(np.linalg.norm(theta - c))
    optimized = distance < config.tol

    while not optimized and step < config.max_steps:
        eps = mvn.sample_mvn(L, rng, K)
        perturbed = theta + eps
        returns = reward_sparse(perturbed, c, radius_sq) if config.sparse else reward_dense(perturbed, c)
        if trajectory is not None:
            trajectory.append((theta.copy(), perturbed))
        grad = reward_gradient(perturbed, c, config.sparse, radius_sq).sum(axis=0) / K
        theta = theta + config.lr * grad
        if first_reward is None and returns.any():
            first_reward = step

        if adaptive:
            dist, log = window_update(dist, eps, returns, None, hyper, strategy, update_index=step)
            L = noise_factor(dist)
        else:
            log = ExplorationLog(step, sigma_bar(dist.big_sigma), dist.alpha, dist.sigma)
        logs.append(log)
        step += 1

        if not moved:
            moved = bool(np.max(np.abs(theta - theta0)) > MOVE_THRESHOLD)
        distance = float(np.linalg.norm(theta - c))
        optimized = distance < config.tol
        if not optimized and not L.any() and not grad.any():
            # zero noise and zero gradient: every later window is identical
            break

    return ToyResult(
        seed=config.seed,
        moved=moved,
        optimized=optimized,
        steps_to_optimize=step if optimized else None,
        final_distance=distance,
        steps=step,
        first_reward_window=first_reward,
        logs=logs,
        trajectory=trajectory,
    )


@dataclass
class SweepStats:
    n: int
    moved: int
    optimized: int
    steps_mean: float
    steps_std: float
    distance_mean: float
    distance_std: float


def aggregate(results: list[ToyResult]) -> SweepStats:
    """Table-style statistics; step stats only over optimized runs (NaN if none)."""
    steps = np.array([r.steps_to_optimize for r in results if r.optimized], dtype=float)
    dists = np.array([r.final_distance for r in results], dtype=float)
    return SweepStats(
        n=len(results),
        moved=sum(r.moved for r in results),
        optimized=sum(r.optimized for r in results),
        steps_mean=float(steps.mean()) if steps.size else math.nan,
        steps_std=float(steps.std()) if steps.size else math.nan,
        distance_mean=float(dists.mean()) if dists.size else math.nan,
        distance_std=float(dists.std()) if dists.size else math.nan,
    )


def sweep_configs(base: ToyConfig, n_seeds: int, first_seed: int = 0) -> list[ToyConfig]:
    return [replace(base, seed=first_seed + i) for i in range(n_seeds)]


def run_sweep(base: ToyConfig, n_seeds: int, first_seed: int = 0, jobs: int = 1) -> tuple[SweepStats, list[ToyResult]]:
    if n_seeds < 1:
        raise ConfigInvalidError("n_seeds must be at least 1")
    configs = sweep_configs(base, n_seeds, first_seed)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_toy, configs))
    else:
        results = [run_toy(cfg) for cfg in configs]
    return aggregate(results), results
