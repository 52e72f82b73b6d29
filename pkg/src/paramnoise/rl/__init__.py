"""Actor-critic training with parameter-space exploration."""

from paramnoise.rl.memory import BufferTooSmallError, ReplayBuffer, RunningNormalizer, Transition
from paramnoise.rl.nets import Adam, CriticNet, DimMismatchError, PolicyNet, soft_update
from paramnoise.rl.trainer import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    TrainState,
    load_checkpoint,
    run_training,
    save_checkpoint,
    train_step,
)

__all__ = [
    "Adam",
    "BufferTooSmallError",
    "CriticNet",
    "DimMismatchError",
    "EpochRecord",
    "PolicyNet",
    "ReplayBuffer",
    "RunningNormalizer",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "Transition",
    "load_checkpoint",
    "run_training",
    "save_checkpoint",
    "soft_update",
    "train_step",
]
