"""Hindsight experience replay with cluster-based episode sampling."""

__version__ = "0.1.0"

from .envs import BitFlip, EnvSpec, PointPush2D, PointReach2D, compute_reward, make_env
from .replay import Episode, EpisodeBuffer, Transition, relabel, sample_future_offset
from .cluster import (
    ClusteredIndex,
    ClusterModel,
    FailedGoalBuffer,
    GoalClusterer,
    assign,
    kmeans_fit,
    maybe_refit,
    reassign_all,
)
from .sampling import Batch, BatchSampler, SamplerConfig, make_batch
from .learner import DDPGAgent, DQNAgent, Mlp, TrainConfig

__all__ = [
    "BitFlip", "EnvSpec", "PointPush2D", "PointReach2D", "compute_reward", "make_env",
    "Episode", "EpisodeBuffer", "Transition", "relabel", "sample_future_offset",
    "ClusteredIndex", "ClusterModel", "FailedGoalBuffer", "GoalClusterer", "assign",
    "kmeans_fit", "maybe_refit", "reassign_all",
    "Batch", "BatchSampler", "SamplerConfig", "make_batch",
    "DDPGAgent", "DQNAgent", "Mlp", "TrainConfig",
]
