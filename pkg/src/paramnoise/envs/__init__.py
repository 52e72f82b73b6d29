"""Environment registry.

Names are ``<task>`` for the dense variant and ``sparse-<task>`` for the
sparse one, e.g. ``sparse-cartpole-swingup``.
"""

from __future__ import annotations

import json

from paramnoise.envs.base import Env, EnvSpec, NonFiniteActionError, wrap_angle
from paramnoise.envs.tasks import CartpoleSwingup, DoublePendulumSwingup, PlanarRunner

TASKS = {cls.base_name: cls for cls in (CartpoleSwingup, DoublePendulumSwingup, PlanarRunner)}

REGISTRY = sorted(name for task in TASKS for name in (task, "sparse-" + task))


class EnvNotFoundError(KeyError):
    pass


def make_env(name: str, overrides: dict | str | None = None) -> Env:
    """Build an environment by registry name.

    ``overrides`` is a dict or JSON object of constructor keywords, e.g.
    ``{"horizon": 300, "pole_mass": 0.2}``.
    """
    if isinstance(overrides, str):
        overrides = json.loads(overrides) if overrides.strip() else {}
    overrides = dict(overrides or {})
    sparse = name.startswith("sparse-")
    base = name[len("sparse-"):] if sparse else name
    if base not in TASKS:
        raise EnvNotFoundError(f"unknown environment {name!r}; available: {', '.join(REGISTRY)}")
    return TASKS[base](sparse=sparse, **overrides)


__all__ = [
    "Env",
    "EnvSpec",
    "EnvNotFoundError",
    "NonFiniteActionError",
    "REGISTRY",
    "TASKS",
    "make_env",
    "wrap_angle",
]
