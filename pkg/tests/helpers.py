"""Shared builders for the test suite."""

import numpy as np

from hercs.envs import make_env
from hercs.replay import Episode, EpisodeRecorder


def random_action(spec, rng):
    if spec.action_kind == "discrete":
        return int(rng.integers(spec.action_count))
    return rng.uniform(-spec.action_bound, spec.action_bound, size=spec.action_dim)


def random_episode(env, seed) -> Episode:
    rng = np.random.default_rng(seed)
    env.seed(rng)
    rec = EpisodeRecorder(env.reset())
    for _ in range(env.spec.horizon):
        a = random_action(env.spec, rng)
        rec.add(a, env.step(a))
    return rec.finish()


def synthetic_episode(spec, last_goal, desired=None, succeeded=False):
    """Episode whose achieved goal sits at ``last_goal`` for every step.

    Rewards are derived from the goals, so pass a ``desired`` goal equal to
    ``last_goal`` to make it a success.
    """
    from hercs.envs import compute_reward

    T, gd, sd = spec.horizon, spec.goal_dim, spec.state_dim
    last_goal = np.asarray(last_goal, dtype=float)
    if desired is None:
        desired = last_goal + (0.0 if succeeded else 10.0)
    desired = np.asarray(desired, dtype=float)
    ags = np.tile(last_goal, (T, 1))
    acts = np.zeros(T, dtype=np.int64) if spec.action_kind == "discrete" else np.zeros((T, spec.action_dim))
    return Episode(
        states=np.zeros((T, sd)),
        actions=acts,
        next_states=np.zeros((T, sd)),
        achieved_goals=ags,
        desired_goal=desired,
        rewards=compute_reward(ags, desired[None, :], spec),
        initial_achieved_goal=last_goal.copy(),
    )


def goal_spec(goal_dim=2, horizon=3):
    """A continuous spec with a free-form goal space for cluster tests."""
    from hercs.envs import EnvSpec

    return EnvSpec(state_dim=1, goal_dim=goal_dim, action_dim=1, horizon=horizon,
                   distance_threshold=0.05, action_kind="continuous")


__all__ = ["random_episode", "synthetic_episode", "goal_spec", "make_env"]
