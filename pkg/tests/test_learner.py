import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hercs.envs import BitFlip, ContractError, make_env
from hercs.learner import (
    Adam,
    DDPGAgent,
    DQNAgent,
    Mlp,
    TrainConfig,
    TrainingDiverged,
    act,
    load_agent,
    mlp_forward,
    mlp_grad,
    mse_loss,
    polyak_update,
    q_targets,
    q_update,
    save_agent,
)
from hercs.sampling import Batch


def central_difference(net, loss_fn, x, idx, h=1e-5):
    p, flat = net.params[idx[0]], idx[1]
    old = p.flat[flat]
    p.flat[flat] = old + h
    up = loss_fn(net.forward(x))[0]
    p.flat[flat] = old - h
    down = loss_fn(net.forward(x))[0]
    p.flat[flat] = old
    return (up - down) / (2 * h)


def jitter_biases(net, rng):
    # zero biases put dead-unit pre-activations exactly on the relu kink
    for i in range(1, len(net.params), 2):
        net.params[i] = rng.normal(scale=0.5, size=net.params[i].shape)
    return net


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def test_zero_net_outputs_zero():
    net = Mlp([3, 4, 2], init=False)
    assert np.array_equal(mlp_forward(net, np.ones(3)), np.zeros(2))


def test_single_linear_layer_by_hand():
    net = Mlp([2, 2], init=False)
    net.params[0] = np.array([[1.0, 2.0], [3.0, 4.0]]).T  # stored (fan_in, fan_out)
    net.params[1] = np.array([1.0, 1.0])
    assert mlp_forward(net, np.array([1.0, 1.0])).tolist() == [4.0, 8.0]


def test_forward_shape_and_mismatch():
    net = Mlp([5, 8, 8, 3], rng=0)
    assert mlp_forward(net, np.concatenate([np.ones(3), np.zeros(2)])).shape == (3,)
    with pytest.raises(ContractError):
        mlp_forward(net, np.ones(4))


def test_constant_loss_has_zero_gradients():
    net = Mlp([3, 5, 2], rng=1)
    x = np.random.default_rng(0).normal(size=(7, 3))
    loss, grads = mlp_grad(net, lambda out: (3.0, np.zeros_like(out)), x)
    assert loss == 3.0
    assert all(np.all(g == 0) for g in grads)


@pytest.mark.parametrize("output", ["identity", "tanh"])
def test_gradients_match_finite_differences(output):
    rng = np.random.default_rng(0)
    net = jitter_biases(Mlp([4, 6, 5, 3], output=output, output_scale=0.7, rng=2), rng)
    x = rng.normal(size=(9, 4))
    loss_fn = mse_loss(rng.normal(size=(9, 3)))
    _, grads = mlp_grad(net, loss_fn, x)
    for _ in range(10):
        i = int(rng.integers(len(net.params)))
        j = int(rng.integers(net.params[i].size))
        assert rel_err(grads[i].flat[j], central_difference(net, loss_fn, x, (i, j))) < 1e-4


@settings(max_examples=15, deadline=None)
@given(sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4), seed=st.integers(0, 10_000))
def test_gradient_property_random_nets(sizes, seed):
    rng = np.random.default_rng(seed)
    net = jitter_biases(Mlp(sizes, rng=seed), rng)
    x = rng.normal(size=(5, sizes[0]))
    loss_fn = mse_loss(rng.normal(size=(5, sizes[-1])))
    _, grads = mlp_grad(net, loss_fn, x)
    for i, p in enumerate(net.params):
        for j in range(min(p.size, 3)):
            num = central_difference(net, loss_fn, x, (i, j))
            assert abs(grads[i].flat[j] - num) <= 1e-4 * max(abs(num), 1e-3)


def test_duplicated_batch_leaves_mean_gradient_unchanged():
    rng = np.random.default_rng(3)
    net = Mlp([3, 4, 2], rng=0)
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    _, g1 = mlp_grad(net, mse_loss(y), x)
    _, g2 = mlp_grad(net, mse_loss(np.vstack([y, y])), np.vstack([x, x]))
    for a, b in zip(g1, g2):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_adam_minimizes_quadratic():
    p = [np.array([3.0, -2.0])]
    opt = Adam(p, lr=0.1)
    for _ in range(500):
        opt.step(p, [2 * p[0]])
    assert np.all(np.abs(p[0]) < 1e-2)


def _discrete_batch(rng, n=32, bits=4, reward=None):
    states = rng.integers(0, 2, size=(n, bits)).astype(float)
    return Batch(
        states=states, actions=rng.integers(0, bits + 1, size=n),
        next_states=rng.integers(0, 2, size=(n, bits)).astype(float),
        goals=rng.integers(0, 2, size=(n, bits)).astype(float),
        rewards=np.full(n, reward) if reward is not None else -rng.integers(0, 2, size=n).astype(float),
        relabeled=np.zeros(n, bool), achieved_goals=states, episode_ids=np.zeros(n, int),
        steps=np.zeros(n, int),
    )


def test_targets_zero_when_reward_and_next_q_zero():
    cfg = TrainConfig()
    assert np.array_equal(q_targets(np.zeros(5), np.zeros(5), cfg), np.zeros(5))


def test_target_clip_range():
    cfg = TrainConfig(gamma=0.98)
    lo, hi = cfg.clip_range
    assert lo == pytest.approx(-50.0)
    y = q_targets(np.array([-1.0, 0.0, -1.0]), np.array([-500.0, 10.0, -20.0]), cfg)
    assert np.all((y >= lo) & (y <= hi))
    assert y[2] == pytest.approx(-1 - 0.98 * 20)


def _batch_loss(net, target, batch, cfg):
    x = np.concatenate([batch.states, batch.goals], axis=1)
    xn = np.concatenate([batch.next_states, batch.goals], axis=1)
    y = q_targets(batch.rewards, target.forward(xn).max(axis=1), cfg)
    q = net.forward(x)[np.arange(len(y)), batch.actions]
    return float(np.mean((q - y) ** 2))


def test_q_update_descends_on_fixed_batch():
    cfg = TrainConfig(lr_critic=1e-3)
    for trial in range(20):
        rng = np.random.default_rng(trial)
        net = Mlp([8, 16, 16, 5], rng=trial)
        target = net.copy()
        batch = _discrete_batch(rng)
        before = _batch_loss(net, target, batch, cfg)
        reported = q_update(net, target, batch, cfg, Adam(net.params, lr=1e-3))
        assert reported == pytest.approx(before)
        assert _batch_loss(net, target, batch, cfg) < before


def test_q_update_divergence_detected():
    cfg = TrainConfig()
    net = Mlp([8, 4, 5], rng=0)
    net.params[0][0, 0] = np.nan
    batch = _discrete_batch(np.random.default_rng(0))
    with pytest.raises(TrainingDiverged, match="training diverged"):
        q_update(net, net.copy(), batch, cfg, Adam(net.params))


def test_polyak():
    online, target = Mlp([2, 3, 1], rng=0), Mlp([2, 3, 1], rng=1)
    keep = [p.copy() for p in target.params]
    polyak_update(target, online, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(keep, target.params))
    polyak_update(target, online, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(online.params, target.params))
    t = Mlp([1, 1], init=False)
    o = Mlp([1, 1], init=False)
    o.params = [np.ones((1, 1)), np.ones(1)]
    polyak_update(t, o, 0.05)
    assert t.params[0][0, 0] == pytest.approx(0.05)
    with pytest.raises(ContractError):
        polyak_update(Mlp([2, 1]), Mlp([3, 1]), 0.5)


def test_greedy_discrete_ties_to_lowest_index():
    env = BitFlip(4)
    agent = DQNAgent(env.spec, TrainConfig(normalize_inputs=False), rng=0)
    last = agent.q.n_layers - 1
    agent.q.params[2 * last][:] = 0.0
    agent.q.params[2 * last + 1][:] = np.array([0.0, 1.0, 1.0, 0.5, 1.0])
    obs = env.reset()
    assert act(agent, obs, False, np.random.default_rng(0)) == 1


def test_epsilon_one_is_uniform():
    env = BitFlip(3)  # 3 flips + no-op = 4 actions
    agent = DQNAgent(env.spec, TrainConfig(exploration_eps=1.0), rng=0)
    obs = env.reset()
    rng = np.random.default_rng(0)
    draws = np.array([agent.act(obs, True, rng) for _ in range(100_000)])
    freqs = np.bincount(draws, minlength=4) / len(draws)
    assert np.all(np.abs(freqs - 0.25) <= 0.02)


def test_continuous_greedy_is_deterministic_and_bounded():
    env = make_env("push2d", seed=0)
    agent = DDPGAgent(env.spec, TrainConfig(), rng=0)
    obs = env.reset()
    a = agent.act(obs, False, np.random.default_rng(0))
    b = agent.act(obs, False, np.random.default_rng(99))
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= env.spec.action_bound)
    noisy = [agent.act(obs, True, np.random.default_rng(i)) for i in range(50)]
    assert all(np.all(np.abs(x) <= env.spec.action_bound) for x in noisy)


def test_ddpg_actor_gradient_matches_finite_differences():
    env = make_env("reach2d")
    cfg = TrainConfig(normalize_inputs=False, action_l2=0.5)
    agent = DDPGAgent(env.spec, cfg, rng=3)
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(16, 4))
    bound = env.spec.action_bound

    def objective():
        pi = agent.actor.forward(x)
        q = agent.critic.forward(np.concatenate([x, pi / bound], axis=1))
        return -q.mean() + cfg.action_l2 * np.mean((pi / bound) ** 2)

    pi, acts = agent.actor.forward(x, keep=True)
    q, cacts = agent.critic.forward(np.concatenate([x, pi / bound], axis=1), keep=True)
    _, g_in = agent.critic.backward(cacts, np.full_like(q, -1.0 / len(x)))
    g_pi = g_in[:, -2:] / bound + cfg.action_l2 * 2 * pi / bound ** 2 / pi.size
    grads, _ = agent.actor.backward(acts, g_pi)
    for _ in range(10):
        i = int(rng.integers(len(agent.actor.params)))
        j = int(rng.integers(agent.actor.params[i].size))
        p = agent.actor.params[i]
        old = p.flat[j]
        p.flat[j] = old + 1e-5
        up = objective()
        p.flat[j] = old - 1e-5
        down = objective()
        p.flat[j] = old
        assert rel_err(grads[i].flat[j], (up - down) / 2e-5) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    env = make_env("push2d")
    agent = DDPGAgent(env.spec, TrainConfig(), rng=0)
    save_agent(agent, tmp_path)
    other = DDPGAgent(env.spec, TrainConfig(), rng=1)
    load_agent(other, tmp_path)
    for name, net in agent.networks().items():
        for a, b in zip(net.params, other.networks()[name].params):
            assert np.array_equal(a, b)
    net = Mlp.load(tmp_path / "actor.npz")
    assert net.layer_sizes == agent.actor.layer_sizes and net.output == "tanh"


def test_parameter_trajectories_are_reproducible():
    def train():
        env = BitFlip(5)
        agent = DQNAgent(env.spec, TrainConfig(), rng=7)
        rng = np.random.default_rng(7)
        for _ in range(30):
            agent.update(_discrete_batch(rng, bits=5))
            agent.sync_target()
        return [p.tobytes() for p in agent.q.params]

    assert train() == train()


@pytest.mark.parametrize("env_id", ["bitflip:5", "reach2d"])
def test_targets_stay_clipped_over_a_run(monkeypatch, env_id):
    from hercs import learner
    from hercs.harness import ExperimentConfig, run_seed

    seen = []
    real = learner.q_targets

    def spy(rewards, next_q, cfg):
        y = real(rewards, next_q, cfg)
        seen.append((y.min(), y.max()))
        return y

    monkeypatch.setattr(learner, "q_targets", spy)
    cfg = ExperimentConfig(env=env_id, epochs=2, cycles_per_epoch=3, episodes_per_cycle=2,
                           optimizer_steps=10, eval_episodes=2, batch_size=32, seeds=(1,))
    run_seed(cfg, 1)
    assert len(seen) == 2 * 3 * 10
    lo, hi = TrainConfig(gamma=cfg.gamma).clip_range
    assert min(s[0] for s in seen) >= lo and max(s[1] for s in seen) <= hi
