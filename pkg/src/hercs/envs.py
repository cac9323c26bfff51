"""Desk-scale multi-goal environments with sparse binary rewards.

Three environments are provided, selected by string id:

``bitflip:<n>``
    Discrete. ``n`` bits, horizon ``n``. Action ``i < n`` flips bit ``i``;
    action ``n`` is a no-op. Goals are bit vectors compared by Hamming count.
``reach2d``
    Continuous point mass in the unit square. Actions are position deltas
    clipped to +/-0.05 per axis. The achieved goal is the point position.
``push2d``
    A point agent (radius 0.03) pushes a box. The box only moves through
    contact, and the achieved goal is the box position. The box starts
    within 0.15 of the agent and the goal within +/-0.15 of the box (pass
    ``goal_range=None`` for goals uniform over the square).

Rewards are ``0.0`` on success and ``-1.0`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when a caller breaks an operation's preconditions."""


# Floating point slack on the success comparison so that a distance equal to
# the threshold up to rounding counts as success.
_TIE_SLACK = 1e-9


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    goal_dim: int
    action_dim: int
    horizon: int
    distance_threshold: float
    action_kind: str  # "discrete" | "continuous"
    goal_metric: str = "euclidean"  # "hamming" | "euclidean"
    action_count: int = 0
    action_bound: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if self.distance_threshold < 0:
            raise ContractError("distance_threshold must be >= 0")
        if self.action_kind not in ("discrete", "continuous"):
            raise ContractError(f"unknown action_kind {self.action_kind!r}")
        if self.action_kind == "discrete" and self.action_count < 1:
            raise ContractError("discrete envs need action_count >= 1")


@dataclass
class Observation:
    state: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray


@dataclass
class StepResult:
    observation: Observation
    reward: float
    is_success: bool
    is_terminal: bool


def goal_distance(achieved, desired, spec: EnvSpec):
    """Distance between goals along the last axis (broadcasts over batches)."""
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape[-1:] != (spec.goal_dim,) or desired.shape[-1:] != (spec.goal_dim,):
        raise ContractError(
            f"goal vectors must have length {spec.goal_dim}, "
            f"got {achieved.shape} and {desired.shape}"
        )
    if spec.goal_metric == "hamming":
        return np.sum(np.abs(achieved - desired) > 0.5, axis=-1)
    return np.linalg.norm(achieved - desired, axis=-1)


def compute_reward(achieved, desired, spec: EnvSpec):
    """Sparse reward: 0.0 when within threshold, else -1.0.

    Works on single goal vectors (returns a float) and on stacked arrays
    of shape ``(..., goal_dim)`` (returns an array).
    """
    d = goal_distance(achieved, desired, spec)
    r = np.where(d <= spec.distance_threshold + _TIE_SLACK, 0.0, -1.0)
    if np.ndim(r) == 0:
        return float(r)
    return r


class GoalEnv:
    """Fixed-horizon goal-conditioned environment base class."""

    spec: EnvSpec

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)
        self._t = None
        self._goal = None

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self, rng=None) -> Observation:
        if rng is not None:
            self.rng = rng
        self._t = 0
        self._reset_state()
        return self._observe()

    def step(self, action) -> StepResult:
        if self._t is None:
            raise ContractError("step called before reset")
        if self._t >= self.spec.horizon:
            raise ContractError("step called after terminal step; call reset")
        self._apply(self._check_action(action))
        self._t += 1
        obs = self._observe()
        reward = compute_reward(obs.achieved_goal, obs.desired_goal, self.spec)
        return StepResult(
            observation=obs,
            reward=reward,
            is_success=reward == 0.0,
            is_terminal=self._t == self.spec.horizon,
        )

    def compute_reward(self, achieved, desired):
        return compute_reward(achieved, desired, self.spec)

    def _check_action(self, action):
        s = self.spec
        if s.action_kind == "discrete":
            a = int(action)
            if not 0 <= a < s.action_count:
                raise ContractError(f"action {action} outside [0, {s.action_count})")
            return a
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (s.action_dim,):
            raise ContractError(f"action must have length {s.action_dim}")
        return np.clip(a, -s.action_bound, s.action_bound)

    def _observe(self) -> Observation:
        state = self._state_vector()
        return Observation(state, self.achieved_goal_of(state), self._goal.copy())

    # subclass hooks
    def _reset_state(self):
        raise NotImplementedError

    def _apply(self, action):
        raise NotImplementedError

    def _state_vector(self) -> np.ndarray:
        raise NotImplementedError

    def achieved_goal_of(self, state) -> np.ndarray:
        raise NotImplementedError


class BitFlip(GoalEnv):
    def __init__(self, n: int = 10, seed=None):
        if n < 1:
            raise ContractError("BitFlip needs n >= 1")
        self.n = n
        self.spec = EnvSpec(
            state_dim=n, goal_dim=n, action_dim=1, horizon=n,
            distance_threshold=0.0, action_kind="discrete",
            goal_metric="hamming", action_count=n + 1,
        )
        super().__init__(seed)

    def _reset_state(self):
        self._bits = self.rng.integers(0, 2, size=self.n).astype(np.float64)
        self._goal = self.rng.integers(0, 2, size=self.n).astype(np.float64)

    def _apply(self, action):
        if action < self.n:
            self._bits[action] = 1.0 - self._bits[action]

    def _state_vector(self):
        return self._bits.copy()

    def achieved_goal_of(self, state):
        return np.asarray(state, dtype=np.float64)[..., : self.n].copy()


class PointReach2D(GoalEnv):
    def __init__(self, seed=None, horizon: int = 50, threshold: float = 0.05,
                 max_delta: float = 0.05):
        self.spec = EnvSpec(
            state_dim=2, goal_dim=2, action_dim=2, horizon=horizon,
            distance_threshold=threshold, action_kind="continuous",
            action_bound=max_delta,
        )
        super().__init__(seed)

    def _reset_state(self):
        self._pos = self.rng.uniform(0.0, 1.0, size=2)
        self._goal = self.rng.uniform(0.0, 1.0, size=2)

    def _apply(self, action):
        self._pos = np.clip(self._pos + action, 0.0, 1.0)

    def _state_vector(self):
        return self._pos.copy()

    def achieved_goal_of(self, state):
        return np.asarray(state, dtype=np.float64)[..., :2].copy()


class PointPush2D(GoalEnv):
    """State layout: ``(agent_x, agent_y, box_x, box_y, box_x - agent_x, box_y - agent_y)``."""

    agent_radius = 0.03
    contact_distance = 0.06

    def __init__(self, seed=None, horizon: int = 60, threshold: float = 0.05,
                 max_delta: float = 0.05, box_spawn_radius=0.15, goal_range=0.15):
        self.box_spawn_radius = box_spawn_radius
        self.goal_range = goal_range
        self.spec = EnvSpec(
            state_dim=6, goal_dim=2, action_dim=2, horizon=horizon,
            distance_threshold=threshold, action_kind="continuous",
            action_bound=max_delta,
        )
        super().__init__(seed)

    def _reset_state(self):
        self._agent = self.rng.uniform(0.0, 1.0, size=2)
        if self.box_spawn_radius is None:
            self._box = self.rng.uniform(0.0, 1.0, size=2)
        else:
            # box starts near the agent but outside contact range
            r = self.box_spawn_radius
            while True:
                box = self._agent + self.rng.uniform(-r, r, size=2)
                gap = np.linalg.norm(box - self._agent)
                if np.all((box >= 0.0) & (box <= 1.0)) and self.contact_distance < gap <= r:
                    break
            self._box = box
        self._goal = self._sample_goal()
        while np.linalg.norm(self._box - self._goal) <= self.spec.distance_threshold + _TIE_SLACK:
            self._goal = self._sample_goal()

    def _sample_goal(self):
        if self.goal_range is None:
            return self.rng.uniform(0.0, 1.0, size=2)
        offset = self.rng.uniform(-self.goal_range, self.goal_range, size=2)
        return np.clip(self._box + offset, 0.0, 1.0)

    def _apply(self, action):
        old = self._agent
        self._agent = np.clip(old + action, 0.0, 1.0)
        moved = self._agent - old
        offset = self._box - self._agent
        dist = np.linalg.norm(offset)
        if dist <= self.contact_distance and dist > 0.0:
            # push only: a retreating agent never drags the box
            along = max(0.0, float(moved @ offset) / dist)
            self._box = np.clip(self._box + along * offset / dist, 0.0, 1.0)

    def _state_vector(self):
        return np.concatenate([self._agent, self._box, self._box - self._agent])

    def achieved_goal_of(self, state):
        return np.asarray(state, dtype=np.float64)[..., 2:4].copy()


def make_env(env_id: str, seed=None) -> GoalEnv:
    """Build an environment from ``bitflip:<n>``, ``reach2d`` or ``push2d``."""
    if env_id.startswith("bitflip"):
        _, _, n = env_id.partition(":")
        try:
            bits = int(n) if n else 10
        except ValueError:
            raise ValueError(f"bad bitflip size in env id {env_id!r}") from None
        return BitFlip(bits, seed=seed)
    if env_id == "reach2d":
        return PointReach2D(seed=seed)
    if env_id == "push2d":
        return PointPush2D(seed=seed)
    raise ValueError(f"unknown env id {env_id!r}; expected bitflip:<n>, reach2d or push2d")
