"""Switching isotropic/directional parameter-space noise.

Noise vectors are drawn from ``N(0, (1 - alpha) * Sigma + alpha * sigma**2 * I)``.
``Sigma`` is rebuilt every window of K episodes from the return-weighted outer
products of the noise that produced each return. ``sigma`` is nudged so the
perturbed policy's actions drift by roughly ``delta``. ``alpha`` moves toward
1 (isotropic) when the returns of a window are close together and toward 0
(directional) when they spread out.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from paramnoise import mvn


class Strategy(str, enum.Enum):
    """Which parts of the distribution are adapted at the end of a window."""

    FV = "fv"  # fixed isotropic variance
    AC = "ac"  # adaptive covariance only (alpha pinned to 0)
    PRO = "pro"  # switching: Sigma, alpha and sigma all adapted
    PLAPPERT = "plappert"  # isotropic with adaptive sigma (alpha pinned to 1)

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {value!r} (expected one of {names})") from None


class EmptyReturnsError(ValueError):
    pass


class NonFiniteReturnError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


class ArchitectureMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseHyper:
    h: float = 8.0
    h2: float = 10.0
    K: int = 10
    delta: float = 0.2
    sigma_init: float = 0.2
    sigma_factor: float = 1.01

    def __post_init__(self):
        for name in ("h", "h2", "delta", "sigma_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.sigma_factor > 1:
            raise ValueError("sigma_factor must be greater than 1")


@dataclass
class NoiseDistribution:
    sigma: float
    big_sigma: np.ndarray
    alpha: float = 1.0

    @property
    def dim(self) -> int:
        return self.big_sigma.shape[0]

    @classmethod
    def initial(cls, dim: int, sigma_init: float, alpha: float = 1.0) -> "NoiseDistribution":
        """Isotropic start: ``Sigma = sigma_init**2 * I``."""
        return cls(sigma=sigma_init, big_sigma=sigma_init**2 * np.eye(dim), alpha=alpha)

    def copy(self) -> "NoiseDistribution":
        return replace(self, big_sigma=self.big_sigma.copy())


@dataclass
class EpisodeRecord:
    noise: np.ndarray
    ret: float


@dataclass
class ExplorationLog:
    update_index: int
    sigma_bar: float
    alpha: float
    sigma: float

    FIELDS = ("update_index", "sigma_bar", "alpha", "sigma")


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a))


def _check_returns(returns) -> np.ndarray:
    j = np.asarray(returns, dtype=float).ravel()
    if j.size == 0:
        raise EmptyReturnsError("no returns given")
    if not np.all(np.isfinite(j)):
        raise NonFiniteReturnError("returns must be finite")
    return j


def compute_weights(returns: Sequence[float], h: float) -> np.ndarray:
    """Softmax-style credit for each episode, scaled by the return range."""
    j = _check_returns(returns)
    j_max, j_min = float(j.max()), float(j.min())
    if _near(j_max, j_min):
        return np.full(j.size, 1.0 / j.size)
    # largest exponent is 0, so no overflow
    e = np.exp(-h * (j_max - j) / (j_max - j_min))
    return e / e.sum()


def update_covariance(records: Sequence[EpisodeRecord], weights: Sequence[float]) -> np.ndarray:
    """Return ``sum_k P_k eps_k eps_k^T``."""
    w = np.asarray(weights, dtype=float)
    if len(records) != w.size:
        raise DimensionMismatchError("one weight per record is required")
    dims = {np.asarray(r.noise).shape for r in records}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DimensionMismatchError("noise vectors must share one length")
    eps = np.stack([np.asarray(r.noise, dtype=float) for r in records])
    return weighted_outer(eps, w)


def weighted_outer(eps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_k w_k eps[k] eps[k]^T`` for a ``(K, N)`` noise matrix."""
    cov = (eps * weights[:, None]).T @ eps
    # exact symmetry regardless of BLAS summation order
    return 0.5 * (cov + cov.T)


def policy_distance(
    policy: Callable[[np.ndarray], np.ndarray],
    perturbed: Callable[[np.ndarray], np.ndarray],
    states: np.ndarray,
) -> float:
    """Root mean squared action difference between two policies over ``states``.

    Both policies map a ``(B, state_dim)`` batch to ``(B, action_dim)``.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[None, :]
    if states.shape[0] == 0:
        raise EmptyBatchError("state batch is empty")
    sizes = getattr(policy, "layer_sizes", None), getattr(perturbed, "layer_sizes", None)
    if sizes[0] != sizes[1]:
        raise ArchitectureMismatchError(f"layer sizes differ: {sizes[0]} vs {sizes[1]}")
    a = np.asarray(policy(states), dtype=float).reshape(states.shape[0], -1)
    b = np.asarray(perturbed(states), dtype=float).reshape(states.shape[0], -1)
    if a.shape != b.shape:
        raise ArchitectureMismatchError("policies produce actions of different shapes")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def adapt_sigma(sigma: float, d: float, delta: float, factor: float = 1.01) -> float:
    return sigma * factor if d < delta else sigma / factor


def compute_alpha(returns: Sequence[float], h2: float) -> float:
    """Mixing weight of the isotropic part.

    ``Jmax == 0`` gives 1. A negative ``Jmax`` is handled by subtracting
    ``Jmin`` from both extremes first.
    """
    j = _check_returns(returns)
    j_max, j_min = float(j.max()), float(j.min())
    if _near(j_max, 0.0):
        return 1.0
    if j_max < 0:
        j_max, j_min = j_max - j_min, 0.0
        if _near(j_max, 0.0):
            return 1.0
    alpha = math.exp(-h2 * (j_max - j_min) / j_max)
    return min(1.0, max(0.0, alpha))


def effective_covariance(dist: NoiseDistribution) -> np.ndarray:
    a = dist.alpha
    if a == 1.0:
        return dist.sigma**2 * np.eye(dist.dim)
    if a == 0.0:
        return dist.big_sigma.copy()
    cov = (1.0 - a) * dist.big_sigma
    cov[np.diag_indices_from(cov)] += a * dist.sigma**2
    return cov


def noise_factor(dist: NoiseDistribution) -> np.ndarray:
    """Cholesky factor of the effective covariance (jitter escalated if needed)."""
    cov = effective_covariance(dist)
    L, _ = mvn.cholesky(cov, mvn.default_jitter(cov))
    return L


def sample_noise(dist: NoiseDistribution, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    return mvn.sample_mvn(noise_factor(dist), rng, size)


def sigma_bar(big_sigma: np.ndarray) -> float:
    """Root of the mean diagonal of ``Sigma``."""
    return math.sqrt(max(float(np.mean(np.diag(big_sigma))), 0.0))


def end_of_window_update(
    dist: NoiseDistribution,
    records: Sequence[EpisodeRecord],
    d_estimate: float | None,
    hyper: NoiseHyper,
    strategy: Strategy | str = Strategy.PRO,
    update_index: int = 0,
    alpha_override: float | None = None,
) -> tuple[NoiseDistribution, ExplorationLog]:
    """Close a window of K episodes and return the next distribution.

    ``d_estimate`` is the measured action-space distance of this window's
    perturbation; ``None`` keeps ``sigma`` fixed (no action space, as in the
    2-D benchmark). ``alpha_override`` pins alpha, e.g. to 0 to reproduce
    variance collapse.
    """
    if len(records) != hyper.K:
        raise ValueError(f"expected {hyper.K} records, got {len(records)}")
    dims = {np.asarray(r.noise).shape for r in records}
    if dims != {(dist.dim,)}:
        raise DimensionMismatchError(f"noise vectors must have length {dist.dim}")
    eps = np.stack([np.asarray(r.noise, dtype=float) for r in records])
    returns = np.array([r.ret for r in records], dtype=float)
    return window_update(dist, eps, returns, d_estimate, hyper, strategy, update_index, alpha_override)


def window_update(
    dist: NoiseDistribution,
    eps: np.ndarray,
    returns: np.ndarray,
    d_estimate: float | None,
    hyper: NoiseHyper,
    strategy: Strategy | str = Strategy.PRO,
    update_index: int = 0,
    alpha_override: float | None = None,
) -> tuple[NoiseDistribution, ExplorationLog]:
    """Array form of :func:`end_of_window_update`; ``eps`` is ``(K, N)``."""
    strategy = Strategy.parse(strategy)

    big_sigma = dist.big_sigma
    if strategy in (Strategy.AC, Strategy.PRO):
        big_sigma = weighted_outer(eps, compute_weights(returns, hyper.h))

    sigma = dist.sigma
    if d_estimate is not None and strategy in (Strategy.PRO, Strategy.PLAPPERT):
        sigma = adapt_sigma(sigma, d_estimate, hyper.delta, hyper.sigma_factor)

    if strategy is Strategy.PRO:
        alpha = compute_alpha(returns, hyper.h2)
    else:
        alpha = dist.alpha
    if alpha_override is not None:
        alpha = alpha_override

    new = NoiseDistribution(sigma=sigma, big_sigma=big_sigma, alpha=alpha)
    return new, ExplorationLog(update_index, sigma_bar(big_sigma), alpha, sigma)


def strategy_alpha(strategy: Strategy | str) -> float:
    """Starting alpha for a strategy."""
    return 0.0 if Strategy.parse(strategy) is Strategy.AC else 1.0


def write_exploration_log(path, logs: Sequence[ExplorationLog]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ExplorationLog.FIELDS)
        for log in logs:
            w.writerow([log.update_index, f"{log.sigma_bar:.9g}", f"{log.alpha:.9g}", f"{log.sigma:.9g}"])


def read_exploration_log(path) -> list[ExplorationLog]:
    with open(path, newline="") as f:
        return [
            ExplorationLog(int(r["update_index"]), float(r["sigma_bar"]), float(r["alpha"]), float(r["sigma"]))
            for r in csv.DictReader(f)
        ]
