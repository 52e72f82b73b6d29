"""Seedable zero-mean multivariate normal sampling.

Random streams come from numpy's ``Generator`` on top of the counter-based
Philox4x64 bit generator. Standard normals are produced by numpy's ziggurat
method (``Generator.standard_normal``), so a given seed yields the same stream
on any platform running the same numpy version.
"""

from __future__ import annotations

import numpy as np

MAX_ESCALATIONS = 10


class NotSymmetricError(ValueError):
    pass


class NotPSDError(np.linalg.LinAlgError):
    pass


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed``."""
    return np.random.Generator(np.random.Philox(seed))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from ``rng``."""
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]


def is_symmetric(m: np.ndarray) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    tol = 1e-12 * np.maximum(1.0, np.abs(m))
    return bool(np.all(np.abs(m - m.T) <= tol))


def default_jitter(m: np.ndarray) -> float:
    """Base jitter ``1e-9 * trace / N``, floored at the smallest normal float."""
    n = m.shape[0]
    return max(1e-9 * max(float(np.trace(m)), 0.0) / n, np.finfo(float).tiny)


def cholesky(m: np.ndarray, jitter: float = 0.0) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``m + j*I`` for the smallest workable ``j``.

    ``j`` runs through ``0, jitter, 10*jitter, ...`` with at most
    ``MAX_ESCALATIONS`` escalations after the first nonzero value.

    Returns:
        ``(L, j)`` with ``L @ L.T == m + j*I``.

    Raises:
        NotSymmetricError: ``m`` is not square and symmetric.
        NotPSDError: every jitter level failed.
    """
    m = np.asarray(m, dtype=float)
    if not is_symmetric(m):
        raise NotSymmetricError("covariance matrix is not symmetric")
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    n = m.shape[0]
    # a PSD matrix with zero trace is the zero matrix
    if not np.any(m):
        return np.zeros_like(m), 0.0

    levels = [0.0]
    if jitter > 0:
        levels += [jitter * 10.0**i for i in range(MAX_ESCALATIONS + 1)]
    eye = np.eye(n)
    for j in levels:
        try:
            return np.linalg.cholesky(m + j * eye if j else m), j
        except np.linalg.LinAlgError:
            continue
    raise NotPSDError(f"matrix is not PSD even with jitter {levels[-1]:g}")


def sample_mvn(L: np.ndarray, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``L @ z`` with ``z`` standard normal.

    With ``size`` given, returns an array of shape ``(size, N)``.
    """
    n = L.shape[0]
    if size is None:
        return L @ rng.standard_normal(n)
    return rng.standard_normal((size, n)) @ L.T
