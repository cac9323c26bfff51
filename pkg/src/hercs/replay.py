"""Episodic replay buffer and hindsight relabeling primitives."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .envs import ContractError, EnvSpec, compute_reward


@dataclass
class Transition:
    state: np.ndarray
    action: object
    next_state: np.ndarray
    achieved_goal: np.ndarray  # achieved goal of next_state
    desired_goal: np.ndarray
    reward: float

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (
            np.array_equal(self.state, other.state)
            and np.array_equal(np.asarray(self.action), np.asarray(other.action))
            and np.array_equal(self.next_state, other.next_state)
            and np.array_equal(self.achieved_goal, other.achieved_goal)
            and np.array_equal(self.desired_goal, other.desired_goal)
            and self.reward == other.reward
        )


@dataclass
class Episode:
    """A full fixed-horizon trajectory stored as stacked arrays.

    ``achieved_goals[t]`` is the achieved goal after step ``t``;
    ``initial_achieved_goal`` is the one before the first step.
    """

    states: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T,) discrete or (T, action_dim)
    next_states: np.ndarray  # (T, state_dim)
    achieved_goals: np.ndarray  # (T, goal_dim)
    desired_goal: np.ndarray  # (goal_dim,)
    rewards: np.ndarray  # (T,)
    initial_achieved_goal: Optional[np.ndarray] = None
    episode_id: Optional[int] = None
    cluster_index: Optional[int] = None
    cluster_version: int = 0
    energy: Optional[float] = None

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    @property
    def last_achieved_goal(self) -> np.ndarray:
        return self.achieved_goals[-1]

    @property
    def succeeded(self) -> bool:
        return bool(np.any(self.rewards == 0.0))

    def transition(self, t: int) -> Transition:
        return Transition(
            state=self.states[t],
            action=self.actions[t],
            next_state=self.next_states[t],
            achieved_goal=self.achieved_goals[t],
            desired_goal=self.desired_goal,
            reward=float(self.rewards[t]),
        )

    @property
    def transitions(self) -> List[Transition]:
        return [self.transition(t) for t in range(self.horizon)]

    def validate(self, spec: EnvSpec):
        T = spec.horizon
        if len(self.rewards) != T or len(self.states) != T or len(self.next_states) != T:
            raise ContractError(f"episode must hold exactly {T} transitions")
        if self.achieved_goals.shape != (T, spec.goal_dim):
            raise ContractError("achieved_goals must have shape (horizon, goal_dim)")
        if np.shape(self.desired_goal) != (spec.goal_dim,):
            raise ContractError("desired_goal has wrong dimension")
        expected = compute_reward(self.achieved_goals, self.desired_goal[None, :], spec)
        if not np.array_equal(expected, self.rewards):
            raise ContractError("stored rewards inconsistent with goals")


class EpisodeRecorder:
    """Accumulates steps of one rollout into an :class:`Episode`."""

    def __init__(self, initial_observation):
        self.initial_achieved_goal = np.array(initial_observation.achieved_goal, dtype=np.float64)
        self.desired_goal = np.array(initial_observation.desired_goal, dtype=np.float64)
        self._state = np.array(initial_observation.state, dtype=np.float64)
        self._rows = []

    def add(self, action, result):
        obs = result.observation
        self._rows.append((self._state, action, obs.state, obs.achieved_goal, result.reward))
        self._state = np.array(obs.state, dtype=np.float64)

    def finish(self) -> Episode:
        states, actions, next_states, ags, rewards = zip(*self._rows)
        return Episode(
            states=np.array(states),
            actions=np.array(actions),
            next_states=np.array(next_states),
            achieved_goals=np.array(ags, dtype=np.float64),
            desired_goal=self.desired_goal,
            rewards=np.array(rewards, dtype=np.float64),
            initial_achieved_goal=self.initial_achieved_goal,
        )


class EpisodeBuffer:
    """Ring buffer of whole episodes with dense, increasing ids.

    Ids start at 1. The id of the episode in slot ``s`` satisfies
    ``(id - 1) % capacity == s``, which lets samplers gather transitions
    from the stacked arrays without a lookup table.
    """

    def __init__(self, spec: EnvSpec, capacity: int = 1000):
        if capacity < 1:
            raise ContractError("capacity must be positive")
        self.spec = spec
        self.capacity = capacity
        self.next_id = 1
        self._episodes: List[Optional[Episode]] = [None] * capacity
        T, sd, gd = spec.horizon, spec.state_dim, spec.goal_dim
        act_shape = (capacity, T) if spec.action_kind == "discrete" else (capacity, T, spec.action_dim)
        self.states = np.zeros((capacity, T, sd))
        self.actions = np.zeros(act_shape, dtype=np.int64 if spec.action_kind == "discrete" else np.float64)
        self.next_states = np.zeros((capacity, T, sd))
        self.achieved_goals = np.zeros((capacity, T, gd))
        self.desired_goals = np.zeros((capacity, gd))
        self.rewards = np.zeros((capacity, T))
        self.energies = np.zeros(capacity)

    def __len__(self):
        return min(self.next_id - 1, self.capacity)

    @property
    def oldest_id(self) -> int:
        return self.next_id - len(self)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.oldest_id, self.next_id)

    def slot(self, episode_id):
        return (np.asarray(episode_id) - 1) % self.capacity

    def is_live(self, episode_id: int) -> bool:
        return self.oldest_id <= episode_id < self.next_id

    def __getitem__(self, episode_id: int) -> Episode:
        if not self.is_live(episode_id):
            raise KeyError(f"episode {episode_id} is not in the buffer")
        return self._episodes[int(self.slot(episode_id))]

    def episodes(self):
        return [self[i] for i in range(self.oldest_id, self.next_id)]

    def store_episode(self, episode: Episode) -> int:
        from .sampling import trajectory_energy

        episode.validate(self.spec)
        eid = self.next_id
        s = int(self.slot(eid))
        episode.episode_id = eid
        episode.cluster_index = None
        episode.cluster_version = 0
        self._episodes[s] = episode
        self.states[s] = episode.states
        self.actions[s] = episode.actions
        self.next_states[s] = episode.next_states
        self.achieved_goals[s] = episode.achieved_goals
        self.desired_goals[s] = episode.desired_goal
        self.rewards[s] = episode.rewards
        self.energies[s] = trajectory_energy(episode)
        self.next_id += 1
        return eid

    def snapshot(self) -> dict:
        """Debug dump: one record per live episode (id, goals, rewards)."""
        return {
            "capacity": self.capacity,
            "next_id": self.next_id,
            "episodes": [
                {
                    "episode_id": ep.episode_id,
                    "desired_goal": ep.desired_goal.tolist(),
                    "last_achieved_goal": ep.last_achieved_goal.tolist(),
                    "rewards": ep.rewards.tolist(),
                    "cluster_index": ep.cluster_index,
                    "cluster_version": ep.cluster_version,
                }
                for ep in self.episodes()
            ],
        }

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.snapshot(), fh, indent=1)


def sample_future_offset(t: int, horizon: int, rng) -> int:
    """Pick a 1-based transition index in ``[t + 1, horizon]``.

    The achieved goal of that transition serves as the hindsight goal for
    the experience at 0-based step ``t``.
    """
    if not 0 <= t < horizon:
        raise ContractError(f"step index {t} outside [0, {horizon})")
    return int(rng.integers(t + 1, horizon + 1))


def relabel(transition: Transition, hindsight_goal, spec: EnvSpec) -> Transition:
    goal = np.asarray(hindsight_goal, dtype=np.float64)
    if goal.shape != (spec.goal_dim,):
        raise ContractError(f"hindsight goal must have length {spec.goal_dim}")
    return replace(
        transition,
        desired_goal=goal,
        reward=compute_reward(transition.achieved_goal, goal, spec),
    )
