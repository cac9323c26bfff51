"""Batch construction for HER and its variants.

A batch is built in three stages:

1. pick ``batch_size`` episodes (uniformly, by cluster quota, by trajectory
   energy, or by energy within cluster quotas),
2. pick one step uniformly from each picked episode,
3. with probability ``future_p`` replace that step's goal by an achieved
   goal from the same or a later step of the episode and recompute the
   reward.

Only stage 1 differs between algorithms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .envs import ContractError, EnvSpec, compute_reward

ALGOS = ("vanilla", "her", "her-cs", "her-ebp", "her-ebp-cs")
CS_ALGOS = ("her-cs", "her-ebp-cs")


@dataclass
class SamplerConfig:
    algo: str = "her"
    batch_size: int = 256
    k: int = 4
    future_p: float = 0.8
    energy_epsilon: float = 1e-4

    def problems(self) -> List[str]:
        out = []
        if self.algo not in ALGOS:
            out.append(f"algo must be one of {', '.join(ALGOS)} (got {self.algo!r})")
        if self.batch_size < 1:
            out.append("batch_size must be positive")
        if self.k < 1:
            out.append("k must be positive")
        if self.algo in CS_ALGOS and self.batch_size < self.k:
            out.append(f"batch_size >= k required for {self.algo} "
                       f"(batch_size={self.batch_size}, k={self.k})")
        if not 0.0 <= self.future_p <= 1.0:
            out.append(f"future_p must lie in [0, 1] (got {self.future_p})")
        if self.energy_epsilon <= 0:
            out.append("energy_epsilon must be positive")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ContractError("; ".join(problems))

    @property
    def effective_future_p(self) -> float:
        return 0.0 if self.algo == "vanilla" else self.future_p


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    goals: np.ndarray
    rewards: np.ndarray
    relabeled: np.ndarray
    achieved_goals: np.ndarray  # achieved goal of next_state, kept for reward checks
    episode_ids: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return len(self.rewards)


def trajectory_energy(episode) -> float:
    """Sum of squared achieved-goal displacements along the trajectory.

    Cached on the episode after the first call.
    """
    if episode.energy is not None:
        return episode.energy
    ags = episode.achieved_goals
    start = episode.initial_achieved_goal
    if start is not None:
        ags = np.vstack([start[None, :], ags])
    steps = np.diff(ags, axis=0)
    episode.energy = float(np.sum(steps * steps))
    return episode.energy


def stage1_uniform(replay, n: int, rng) -> np.ndarray:
    if len(replay) == 0:
        raise ValueError("cannot sample from empty buffer")
    return replay.oldest_id + rng.integers(0, len(replay), size=n)


def _energy_weights(replay, ids, eps):
    w = replay.energies[replay.slot(ids)] + eps
    return w / w.sum()


def stage1_ebp(replay, n: int, energy_epsilon: float, rng) -> np.ndarray:
    if len(replay) == 0:
        raise ValueError("cannot sample from empty buffer")
    ids = replay.ids
    return rng.choice(ids, size=n, p=_energy_weights(replay, ids, energy_epsilon))


def cluster_quotas(sizes, batch_size: int) -> List[int]:
    """Per-cluster episode counts for a cluster-balanced batch.

    Every cluster starts at ``batch_size // k``. The remainder goes one each
    to the lowest-indexed non-empty clusters; quotas of empty clusters are
    then dealt round-robin over the non-empty ones, continuing where the
    remainder left off.
    """
    k = len(sizes)
    live = [i for i, s in enumerate(sizes) if s > 0]
    if not live:
        raise ValueError("all clusters are empty")
    base, extra = divmod(batch_size, k)
    quotas = [base if s > 0 else 0 for s in sizes]
    extra += base * (k - len(live))
    for j in range(extra):
        quotas[live[j % len(live)]] += 1
    return quotas


def _stage1_clustered(index, batch_size, k, rng, draw):
    if len(index.buckets) != k:
        raise ContractError(f"index has {len(index.buckets)} buckets, expected k={k}")
    quotas = cluster_quotas(index.sizes, batch_size)
    parts = []
    for bucket, q in zip(index.buckets, quotas):
        if q:
            parts.append(draw(np.fromiter(bucket, dtype=np.int64, count=len(bucket)), q))
    return np.concatenate(parts)


def stage1_cs(index, replay, batch_size: int, k: int, rng) -> np.ndarray:
    if index.model_version < 1:
        raise ContractError("clustered index is not live (no model fit yet)")
    return _stage1_clustered(
        index, batch_size, k, rng,
        lambda ids, q: ids[rng.integers(0, len(ids), size=q)],
    )


def stage1_ebp_cs(index, replay, batch_size: int, k: int, energy_epsilon: float, rng) -> np.ndarray:
    if index.model_version < 1:
        raise ContractError("clustered index is not live (no model fit yet)")
    return _stage1_clustered(
        index, batch_size, k, rng,
        lambda ids, q: rng.choice(ids, size=q, p=_energy_weights(replay, ids, energy_epsilon)),
    )


def make_batch(refs, replay, spec: EnvSpec, future_p: float, rng) -> Batch:
    """Stages 2 and 3: one uniform step per episode, then hindsight relabeling.

    Random draws happen in a fixed order (steps, relabel coin flips, future
    offsets) so batches are reproducible from the generator state.
    """
    refs = np.asarray(refs, dtype=np.int64)
    if len(refs) and (refs.min() < replay.oldest_id or refs.max() >= replay.next_id):
        raise RuntimeError("dangling episode reference in batch")
    T = spec.horizon
    n = len(refs)
    slots = replay.slot(refs)
    t = rng.integers(0, T, size=n)
    relabeled = rng.random(n) < future_p
    future = rng.integers(t + 1, T + 1)  # 1-based transition index
    achieved = replay.achieved_goals[slots, t]
    goals = np.where(
        relabeled[:, None],
        replay.achieved_goals[slots, future - 1],
        replay.desired_goals[slots],
    )
    rewards = np.where(relabeled, compute_reward(achieved, goals, spec), replay.rewards[slots, t])
    return Batch(
        states=replay.states[slots, t],
        actions=replay.actions[slots, t],
        next_states=replay.next_states[slots, t],
        goals=goals,
        rewards=rewards,
        relabeled=relabeled,
        achieved_goals=achieved,
        episode_ids=refs,
        steps=t,
    )


class BatchSampler:
    """Builds training batches for one of the five algorithms.

    Cluster-based variants fall back to their non-clustered stage 1 until
    the first cluster model exists.
    """

    def __init__(self, config: SamplerConfig, replay, clusterer=None):
        config.validate()
        if config.algo in CS_ALGOS and clusterer is None:
            raise ContractError(f"{config.algo} needs a GoalClusterer")
        self.config = config
        self.replay = replay
        self.clusterer = clusterer

    def episode_refs(self, rng) -> np.ndarray:
        c = self.config
        live_index = self.clusterer is not None and self.clusterer.model.fitted
        if c.algo == "her-cs" and live_index:
            return stage1_cs(self.clusterer.index, self.replay, c.batch_size, c.k, rng)
        if c.algo == "her-ebp-cs" and live_index:
            return stage1_ebp_cs(self.clusterer.index, self.replay, c.batch_size, c.k,
                                 c.energy_epsilon, rng)
        if c.algo in ("her-ebp", "her-ebp-cs"):
            return stage1_ebp(self.replay, c.batch_size, c.energy_epsilon, rng)
        return stage1_uniform(self.replay, c.batch_size, rng)

    def sample(self, rng) -> Batch:
        refs = self.episode_refs(rng)
        return make_batch(refs, self.replay, self.replay.spec, self.config.effective_future_p, rng)
