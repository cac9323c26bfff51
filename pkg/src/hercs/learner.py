"""Small numpy MLPs with hand-written backprop, Adam, DQN and DDPG.

Goal-conditioned networks take ``[state || goal]`` (plus the normalized
action for the DDPG critic). Rewards are in ``{-1, 0}``, so Q targets can be
clipped to ``[-1 / (1 - gamma), 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .envs import ContractError, EnvSpec


class TrainingDiverged(FloatingPointError):
    pass


class Mlp:
    """Fully connected net, ReLU hidden layers.

    ``output`` is ``"identity"`` or ``"tanh"``; tanh outputs are multiplied
    by ``output_scale``. Parameters live in ``self.params`` as
    ``[W0, b0, W1, b1, ...]`` with ``W`` shaped ``(fan_in, fan_out)``.
    """

    def __init__(self, layer_sizes: Sequence[int], output: str = "identity",
                 output_scale: float = 1.0, rng=None, init: bool = True):
        if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
            raise ContractError("layer_sizes needs >= 2 positive entries")
        if output not in ("identity", "tanh"):
            raise ContractError(f"unknown output activation {output!r}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.output = output
        self.output_scale = float(output_scale)
        self.params: List[np.ndarray] = []
        rng = np.random.default_rng(rng)
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if init:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            else:
                self.params.append(np.zeros((fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.layer_sizes = list(self.layer_sizes)
        net.output = self.output
        net.output_scale = self.output_scale
        net.params = [p.copy() for p in self.params]
        return net

    def _check_input(self, x):
        if x.shape[-1] != self.layer_sizes[0]:
            raise ContractError(
                f"input has length {x.shape[-1]}, network expects {self.layer_sizes[0]}"
            )

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        acts = [x]
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        out = h * self.output_scale if self.output == "tanh" else h
        return (out, acts) if keep else out

    def backward(self, acts, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of a scalar loss given ``d loss / d output``.

        Returns parameter gradients (aligned with ``params``) and the
        gradient with respect to the input.
        """
        grads: List[np.ndarray] = [None] * len(self.params)
        g = np.asarray(grad_out, dtype=np.float64)
        if self.output == "tanh":
            g = g * self.output_scale * (1.0 - acts[-1] ** 2)
        for i in reversed(range(self.n_layers)):
            h_in = acts[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        return grads, g

    def save(self, path):
        """Write ``layer_sizes`` plus ``W{i}``/``b{i}`` arrays (C order) to an ``.npz``."""
        arrays = {"layer_sizes": np.array(self.layer_sizes, dtype=np.int64),
                  "output": np.array(self.output),
                  "output_scale": np.array(self.output_scale)}
        for i in range(self.n_layers):
            arrays[f"W{i}"] = np.ascontiguousarray(self.params[2 * i])
            arrays[f"b{i}"] = self.params[2 * i + 1]
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "Mlp":
        with np.load(path) as data:
            net = cls(data["layer_sizes"].tolist(), output=str(data["output"]),
                      output_scale=float(data["output_scale"]), init=False)
            for i in range(net.n_layers):
                net.params[2 * i] = data[f"W{i}"].copy()
                net.params[2 * i + 1] = data[f"b{i}"].copy()
        return net


def mlp_forward(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return net.forward(x[None, :])[0]
    return net.forward(x)


def mse_loss(targets, mask=None) -> Callable:
    """Mean over rows of the (optionally masked) squared error summed over outputs."""
    targets = np.asarray(targets, dtype=np.float64)

    def fn(out):
        diff = out - targets
        if mask is not None:
            diff = diff * mask
        n = len(out)
        return float(np.sum(diff * diff) / n), 2.0 * diff / n

    return fn


def mlp_grad(net: Mlp, loss_fn: Callable, inputs) -> Tuple[float, List[np.ndarray]]:
    """Loss value and parameter gradients for ``loss_fn(net(inputs))``.

    ``loss_fn`` maps the output batch to ``(loss, d loss / d output)``.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ContractError("inputs must be a 2-D batch")
    out, acts = net.forward(inputs, keep=True)
    loss, grad_out = loss_fn(out)
    if np.shape(grad_out) != out.shape:
        raise ContractError("loss gradient shape does not match network output")
    grads, _ = net.backward(acts, grad_out)
    return loss, grads


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    if target.layer_sizes != online.layer_sizes:
        raise ContractError("target and online networks differ in shape")
    for tp, op in zip(target.params, online.params):
        tp *= 1.0 - tau
        tp += tau * op
    return target


class Normalizer:
    """Running mean / std of input features, applied as ``clip((x - mean) / std)``."""

    def __init__(self, size: int, clip: float = 5.0, eps: float = 1e-2):
        self.size, self.clip, self.eps = size, clip, eps
        self.count = 0
        self.total = np.zeros(size)
        self.total_sq = np.zeros(size)
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.size)
        self.count += len(x)
        self.total += x.sum(axis=0)
        self.total_sq += (x * x).sum(axis=0)
        self.mean = self.total / self.count
        var = self.total_sq / self.count - self.mean ** 2
        self.std = np.sqrt(np.maximum(var, self.eps ** 2))

    def __call__(self, x):
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)


@dataclass
class TrainConfig:
    gamma: float = 0.98
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    polyak_tau: float = 0.05
    exploration_eps: float = 0.2
    action_noise_sigma: float = 0.1
    target_clip: bool = True
    hidden: Tuple[int, ...] = (64, 64)
    action_l2: float = 0.0
    random_eps: float = 0.3  # continuous only: chance of a uniform random action
    normalize_inputs: bool = True

    def problems(self) -> List[str]:
        out = []
        if not 0.0 < self.gamma < 1.0:
            out.append("gamma must lie in (0, 1)")
        if not 0.0 < self.polyak_tau <= 1.0:
            out.append("polyak_tau must lie in (0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            out.append("learning rates must be positive")
        if self.exploration_eps < 0 or self.action_noise_sigma < 0 or not 0 <= self.random_eps <= 1:
            out.append("exploration parameters must be nonnegative")
        return out

    @property
    def clip_range(self) -> Tuple[float, float]:
        return -1.0 / (1.0 - self.gamma), 0.0


def _check_finite(loss: float):
    if not np.isfinite(loss):
        raise TrainingDiverged("training diverged")


def q_targets(rewards, next_q, cfg: TrainConfig) -> np.ndarray:
    y = rewards + cfg.gamma * next_q
    if cfg.target_clip:
        y = np.clip(y, *cfg.clip_range)
    return y


def _concat_inputs(states, goals):
    return np.concatenate([states, goals], axis=-1)


def q_update(critic: Mlp, target_critic: Mlp, batch, cfg: TrainConfig, opt: Adam,
             inputs=_concat_inputs) -> float:
    """One DQN step on a relabeled batch. Returns the loss before the step.

    ``inputs(states, goals)`` builds network inputs (plain concatenation by
    default).
    """
    x = inputs(batch.states, batch.goals)
    x_next = inputs(batch.next_states, batch.goals)
    y = q_targets(batch.rewards, target_critic.forward(x_next).max(axis=1), cfg)
    q, acts = critic.forward(x, keep=True)
    rows = np.arange(len(q))
    a = np.asarray(batch.actions, dtype=np.int64)
    err = q[rows, a] - y
    loss = float(np.mean(err * err))
    _check_finite(loss)
    grad_out = np.zeros_like(q)
    grad_out[rows, a] = 2.0 * err / len(q)
    grads, _ = critic.backward(acts, grad_out)
    opt.step(critic.params, grads)
    return loss


class _GoalAgent:
    def __init__(self, spec: EnvSpec, cfg: TrainConfig):
        self.spec, self.cfg = spec, cfg
        self.state_norm = Normalizer(spec.state_dim)
        self.goal_norm = Normalizer(spec.goal_dim)

    def inputs(self, states, goals) -> np.ndarray:
        if not self.cfg.normalize_inputs:
            return _concat_inputs(states, goals)
        return _concat_inputs(self.state_norm(states), self.goal_norm(goals))

    def observe_episode(self, episode):
        """Update input statistics from a freshly collected episode."""
        if not self.cfg.normalize_inputs:
            return
        self.state_norm.update(episode.states)
        self.goal_norm.update(episode.desired_goal)
        self.goal_norm.update(episode.achieved_goals)

    def networks(self) -> dict:
        raise NotImplementedError

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for net in self.networks().values() for p in net.params)


class DQNAgent(_GoalAgent):
    """Goal-conditioned DQN with a polyak-averaged target network."""

    def __init__(self, spec: EnvSpec, cfg: TrainConfig, rng=None):
        super().__init__(spec, cfg)
        rng = np.random.default_rng(rng)
        sizes = [spec.state_dim + spec.goal_dim, *cfg.hidden, spec.action_count]
        self.q = Mlp(sizes, rng=rng)
        self.q_target = self.q.copy()
        self.opt = Adam(self.q.params, lr=cfg.lr_critic)

    def q_values(self, state, goal) -> np.ndarray:
        return mlp_forward(self.q, self.inputs(state, goal))

    def act(self, observation, explore: bool, rng) -> int:
        eps = self.cfg.exploration_eps if explore else 0.0
        if eps > 0 and rng.random() < eps:
            return int(rng.integers(self.spec.action_count))
        return int(np.argmax(self.q_values(observation.state, observation.desired_goal)))

    def update(self, batch) -> float:
        return q_update(self.q, self.q_target, batch, self.cfg, self.opt, self.inputs)

    def sync_target(self):
        polyak_update(self.q_target, self.q, self.cfg.polyak_tau)

    def networks(self):
        return {"q": self.q, "q_target": self.q_target}


class DDPGAgent(_GoalAgent):
    """Goal-conditioned deterministic actor-critic for continuous actions.

    The actor emits ``tanh * action_bound``; the critic sees actions divided
    by ``action_bound``. Exploration adds Gaussian noise of scale
    ``sigma * action_bound`` and, with probability ``random_eps``, replaces
    the action by a uniform random one.
    """

    def __init__(self, spec: EnvSpec, cfg: TrainConfig, rng=None):
        super().__init__(spec, cfg)
        rng = np.random.default_rng(rng)
        obs_in = spec.state_dim + spec.goal_dim
        self.actor = Mlp([obs_in, *cfg.hidden, spec.action_dim], output="tanh",
                         output_scale=spec.action_bound, rng=rng)
        self.critic = Mlp([obs_in + spec.action_dim, *cfg.hidden, 1], rng=rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, lr=cfg.lr_actor)
        self.critic_opt = Adam(self.critic.params, lr=cfg.lr_critic)

    def policy(self, state, goal) -> np.ndarray:
        return mlp_forward(self.actor, self.inputs(state, goal))

    def act(self, observation, explore: bool, rng) -> np.ndarray:
        bound = self.spec.action_bound
        a = self.policy(observation.state, observation.desired_goal)
        if explore:
            if self.cfg.action_noise_sigma > 0:
                a = a + self.cfg.action_noise_sigma * bound * rng.standard_normal(a.shape)
            if self.cfg.random_eps > 0 and rng.random() < self.cfg.random_eps:
                a = rng.uniform(-bound, bound, size=a.shape)
        return np.clip(a, -bound, bound)

    def _critic_in(self, obs_x, actions):
        return np.concatenate([obs_x, actions / self.spec.action_bound], axis=1)

    def update(self, batch) -> float:
        """Critic step then actor step. Returns the critic loss before the step."""
        cfg = self.cfg
        x = self.inputs(batch.states, batch.goals)
        x_next = self.inputs(batch.next_states, batch.goals)
        a_next = self.actor_target.forward(x_next)
        next_q = self.critic_target.forward(self._critic_in(x_next, a_next))[:, 0]
        y = q_targets(batch.rewards, next_q, cfg)

        q, acts = self.critic.forward(self._critic_in(x, batch.actions), keep=True)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        _check_finite(loss)
        grads, _ = self.critic.backward(acts, (2.0 * err / len(err))[:, None])
        self.critic_opt.step(self.critic.params, grads)

        pi, actor_acts = self.actor.forward(x, keep=True)
        q_pi, critic_acts = self.critic.forward(self._critic_in(x, pi), keep=True)
        n = len(pi)
        _, g_in = self.critic.backward(critic_acts, np.full_like(q_pi, -1.0 / n))
        bound = self.spec.action_bound
        g_pi = g_in[:, -self.spec.action_dim:] / bound
        g_pi += cfg.action_l2 * 2.0 * pi / (bound * bound) / (n * self.spec.action_dim)
        actor_grads, _ = self.actor.backward(actor_acts, g_pi)
        self.actor_opt.step(self.actor.params, actor_grads)
        return loss

    def sync_target(self):
        polyak_update(self.actor_target, self.actor, self.cfg.polyak_tau)
        polyak_update(self.critic_target, self.critic, self.cfg.polyak_tau)

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}


def make_agent(spec: EnvSpec, cfg: TrainConfig, rng=None):
    if spec.action_kind == "discrete":
        return DQNAgent(spec, cfg, rng)
    return DDPGAgent(spec, cfg, rng)


def act(policy, observation, explore: bool, rng):
    return policy.act(observation, explore, rng)


def save_agent(agent, directory):
    """One ``<name>.npz`` checkpoint per network in ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, net in agent.networks().items():
        net.save(d / f"{name}.npz")


def load_agent(agent, directory):
    d = Path(directory)
    for name, net in agent.networks().items():
        net.params = Mlp.load(d / f"{name}.npz").params
    return agent
