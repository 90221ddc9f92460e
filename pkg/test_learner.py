"""
Tests for the actor-critic learner.
"""
import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.learner import (
    DdpgAgent, EpisodeMetrics, LearnerConfig, Trainer, TrainingDivergedError, act,
    actor_gradients, actor_update, critic_gradients, critic_update, encode_state,
    load_checkpoint, normalize_returns, save_checkpoint, soft_update
)
from src.ltl import TrueConst
from src.networks import Adam, Mlp
from src.product import ProductEnv, ProductState, ResetMode, Termination
from src.replay_buffer import Batch
from src.shaping import VisitVector, annotate
from src.translator import translate_fragment
from src.workspace import CarAction, CarState


def small_config(**overrides) -> LearnerConfig:
    values = dict(actor_hidden=[16, 16], critic_hidden=[16, 16], batch_size=16,
                  learning_starts=50, buffer_capacity=1000, seed=7)
    values.update(overrides)
    return LearnerConfig(**values)


def random_batch(rng: np.random.Generator, n: int, state_dim: int) -> Batch:
    return Batch(
        states=rng.normal(size=(n, state_dim)),
        actions=rng.uniform(-1, 1, size=(n, 2)),
        rewards=rng.normal(size=n),
        next_states=rng.normal(size=(n, state_dim)),
        dones=(rng.random(n) < 0.3).astype(float)
    )


def scrambled(sizes, activation, rng) -> Mlp:
    net = Mlp(sizes, activation, 1.0, rng)
    net.weights[-1][...] = rng.normal(0.0, 0.5, size=net.weights[-1].shape)
    return net


def finite_difference(f, params, rng, count=20):
    """Yield (param index, entry, numeric derivative) for random coordinates."""
    eps = 1e-5
    for _ in range(count):
        p = int(rng.integers(0, len(params)))
        idx = tuple(int(rng.integers(0, n)) for n in params[p].shape)
        saved = params[p][idx]
        params[p][idx] = saved + eps
        up = f()
        params[p][idx] = saved - eps
        down = f()
        params[p][idx] = saved
        yield p, idx, (up - down) / (2 * eps)


class QuadraticCritic:
    """Q(s, a) = -|a|^2 in the Mlp calling convention."""

    def __init__(self, state_dim: int):
        self.state_dim = state_dim

    def forward(self, x):
        a = x[:, self.state_dim:]
        return -np.sum(a ** 2, axis=1, keepdims=True), x

    def backward(self, cache, dq):
        dx = np.zeros_like(cache)
        dx[:, self.state_dim:] = -2.0 * cache[:, self.state_dim:] * dq
        return None, dx


class TestEncoding:
    def test_feature_layout(self):
        ps = ProductState(CarState(0.0, 0.0, 0.0), 0, VisitVector.ones(1))
        np.testing.assert_array_equal(encode_state(ps, 3), [0, 0, 0, 1, 1, 0, 0, 1])

    def test_position_scaled(self):
        ps = ProductState(CarState(5.0, -2.5, np.pi / 2), 1, VisitVector((False, True)))
        features = encode_state(ps, 2, scale=5.0)
        np.testing.assert_allclose(features, [1.0, -0.5, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0], atol=1e-12)

    def test_zero_actor_stays_still(self, rng):
        agent = DdpgAgent.create(small_config(), 3, 1, rng)
        for w, b in zip(agent.actor.weights, agent.actor.biases):
            w[...] = 0.0
            b[...] = 0.0
        ps = ProductState(CarState(1.0, 2.0, 0.3), 1, VisitVector.ones(1))
        assert act(agent.actor, ps, 0.0) == CarAction(0.0, 0.0)

    def test_noise_needs_generator(self, rng):
        agent = DdpgAgent.create(small_config(), 3, 1, rng)
        ps = ProductState(CarState(0.0, 0.0, 0.0), 0, VisitVector.ones(1))
        with pytest.raises(ValueError):
            act(agent.actor, ps, 0.1)

    def test_noisy_action_clipped(self, rng):
        agent = DdpgAgent.create(small_config(), 3, 1, rng)
        ps = ProductState(CarState(0.0, 0.0, 0.0), 0, VisitVector.ones(1))
        for _ in range(20):
            a = act(agent.actor, ps, 10.0, rng)
            assert -1.0 <= a.v <= 1.0 and -1.0 <= a.phi <= 1.0


class TestGradients:
    def test_critic(self):
        rng = np.random.default_rng(21)
        critic = scrambled([8, 10, 1], 'identity', rng)
        batch = random_batch(rng, 12, 6)
        targets = rng.normal(size=12)
        _, grads = critic_gradients(critic, batch, targets)

        def loss():
            return critic_gradients(critic, batch, targets)[0]

        for p, idx, numeric in finite_difference(loss, critic.parameters(), rng):
            analytic = grads[p][idx]
            assert abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)) < 1e-4

    def test_actor(self):
        rng = np.random.default_rng(22)
        actor = scrambled([6, 10, 2], 'tanh', rng)
        critic = scrambled([8, 10, 1], 'identity', rng)
        states = rng.normal(size=(9, 6))
        _, grads = actor_gradients(actor, critic, states)

        def objective():
            return float(np.mean(critic(np.hstack([states, actor(states)]))))

        for p, idx, numeric in finite_difference(objective, actor.parameters(), rng):
            analytic = grads[p][idx]
            assert abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric)) < 1e-4


class TestUpdates:
    def test_actor_follows_critic(self):
        rng = np.random.default_rng(5)
        actor = Mlp([3, 8, 2], 'tanh', 1.0, rng)
        actor.biases[-1][...] = [0.5, -0.5]
        optimizer = Adam(actor.parameters(), 1e-2)
        batch = random_batch(rng, 32, 3)
        critic = QuadraticCritic(3)
        for _ in range(500):
            actor_update(actor, optimizer, critic, batch)
        assert np.abs(actor(batch.states)).mean() < 0.1

    def test_critic_learns_terminal_reward(self):
        rng = np.random.default_rng(6)
        critic = Mlp([5, 16, 1], 'identity', 1.0, rng)
        target_critic = critic.copy()
        target_actor = Mlp([3, 8, 2], 'tanh', 1.0, rng)
        optimizer = Adam(critic.parameters(), 1e-2)
        batch = random_batch(rng, 32, 3)
        batch.rewards[...] = 1.0
        batch.dones[...] = 1.0
        for _ in range(500):
            critic_update(critic, optimizer, target_actor, target_critic, batch, 0.99)
        q = critic(np.hstack([batch.states, batch.actions]))
        assert np.abs(q - 1.0).max() < 0.1

    def test_divergence_detected(self):
        rng = np.random.default_rng(8)
        critic = Mlp([5, 4, 1], rng=rng)
        actor = Mlp([3, 4, 2], 'tanh', rng=rng)
        batch = random_batch(rng, 4, 3)
        batch.rewards[0] = np.inf
        with pytest.raises(TrainingDivergedError):
            critic_update(critic, Adam(critic.parameters(), 1e-3), actor, critic.copy(), batch, 0.99)

    def test_empty_batch(self):
        rng = np.random.default_rng(8)
        critic = Mlp([5, 4, 1], rng=rng)
        actor = Mlp([3, 4, 2], 'tanh', rng=rng)
        batch = random_batch(rng, 0, 3)
        with pytest.raises(ValueError):
            critic_update(critic, Adam(critic.parameters(), 1e-3), actor, critic.copy(), batch, 0.99)
        with pytest.raises(ValueError):
            actor_update(actor, Adam(actor.parameters(), 1e-3), critic, batch)


class TestSoftUpdate:
    def nets(self):
        online = Mlp([2, 3, 1], rng=np.random.default_rng(0))
        target = online.copy()
        for p in online.parameters():
            p[...] = 1.0
        for p in target.parameters():
            p[...] = 0.0
        return target, online

    def test_full_copy(self):
        target, online = self.nets()
        soft_update(target, online, 1.0)
        assert all(np.all(p == 1.0) for p in target.parameters())

    def test_no_change(self):
        target, online = self.nets()
        soft_update(target, online, 0.0)
        assert all(np.all(p == 0.0) for p in target.parameters())

    def test_geometric_approach(self):
        target, online = self.nets()
        for _ in range(10):
            soft_update(target, online, 0.1)
        for p in target.parameters():
            np.testing.assert_allclose(p, 1.0 - 0.9 ** 10)

    def test_architecture_mismatch(self):
        with pytest.raises(ValueError):
            soft_update(Mlp([2, 3, 1]), Mlp([2, 4, 1]), 0.5)


class TestConfig:
    def test_defaults(self):
        cfg = LearnerConfig()
        assert (cfg.discount, cfg.tau, cfg.batch_size) == (0.99, 0.005, 64)
        assert cfg.mode is ResetMode.RANDOM_Q

    def test_mode_spelling(self):
        assert LearnerConfig(mode='fixed-q0').mode is ResetMode.FIXED_Q0

    @pytest.mark.parametrize('field, value', [
        ('discount', 1.0), ('tau', 0.5), ('actor_lr', 0.0), ('optimizer', 'rmsprop'),
        ('actor_hidden', []), ('batch_size', 0)
    ])
    def test_rejected(self, field, value):
        with pytest.raises(ValidationError):
            LearnerConfig(**{field: value})


class TestMetrics:
    def test_normalize(self):
        episodes = [
            EpisodeMetrics(10, 1, -2.0, 10, False, False, Termination.STEP_LIMIT),
            EpisodeMetrics(11, 2, 50.0, 1, True, False, Termination.ACCEPTED_ROUND),
            EpisodeMetrics(31, 3, 14.0, 20, False, False, Termination.STEP_LIMIT),
        ]
        assert normalize_returns(episodes) == pytest.approx([0.0, 1.0, 0.9 / 50.2])

    def test_constant_run(self):
        episodes = [EpisodeMetrics(i, i, 5.0, 5, False, False, Termination.STEP_LIMIT) for i in range(1, 4)]
        assert normalize_returns(episodes) == [0.0, 0.0, 0.0]
        assert normalize_returns([]) == []

    def test_noise_schedule(self):
        trainer = Trainer(LearnerConfig(noise=0.2, noise_final=0.05), verbose=False)
        assert trainer.noise_at(0, 100) == 0.2
        assert trainer.noise_at(100, 100) == pytest.approx(0.05)
        assert trainer.noise_at(50, 100) == pytest.approx(0.125)


class TestTrainer:
    def env(self, annotated, workspace, params, max_steps=50):
        return ProductEnv(annotated, workspace, params, max_episode_steps=max_steps)

    def test_zero_steps_returns_initial_agent(self, phi1_annotated, example1_workspace, example1_params):
        cfg = small_config()
        result = Trainer(cfg, verbose=False).train(self.env(phi1_annotated, example1_workspace, example1_params), 0)
        fresh = DdpgAgent.create(cfg, 3, 1, np.random.default_rng(cfg.seed))
        for x, y in zip(result.agent.actor.parameters(), fresh.actor.parameters()):
            np.testing.assert_array_equal(x, y)
        assert result.episodes == []

    def test_always_accepting_task(self, example1_workspace, example1_params):
        annotated = annotate(translate_fragment(TrueConst()))
        env = self.env(annotated, example1_workspace, example1_params)
        result = Trainer(small_config(), verbose=False).train(env, 120)
        assert len(result.episodes) == 120
        assert all(e.accepted and e.length == 1 for e in result.episodes)
        assert result.mean_step_reward == 50.0

    def test_reproducible(self, phi1_annotated, example1_workspace, example1_params):
        env = self.env(phi1_annotated, example1_workspace, example1_params)
        first = Trainer(small_config(), verbose=False).train(env, 300)
        second = Trainer(small_config(), verbose=False).train(env, 300)
        for x, y in zip(first.agent.actor.parameters(), second.agent.actor.parameters()):
            np.testing.assert_array_equal(x, y)
        assert first.metrics_rows() == second.metrics_rows()

        other = Trainer(small_config(seed=8), verbose=False).train(env, 300)
        assert any(not np.array_equal(x, y)
                   for x, y in zip(first.agent.actor.parameters(), other.agent.actor.parameters()))

    def test_metrics_rows(self, phi1_annotated, example1_workspace, example1_params):
        env = self.env(phi1_annotated, example1_workspace, example1_params, max_steps=20)
        result = Trainer(small_config(), verbose=False).train(env, 100, mode='fixed-q0')
        rows = result.metrics_rows()
        assert result.mode is ResetMode.FIXED_Q0
        assert rows and list(rows[0]) == ['step', 'episode', 'return', 'normalized_return',
                                          'accepted', 'epsilon_used']
        assert [r['episode'] for r in rows] == list(range(1, len(rows) + 1))
        assert all(0.0 <= r['normalized_return'] <= 1.0 for r in rows)
        assert rows[-1]['step'] <= 100

    def test_negative_steps(self, phi1_annotated, example1_workspace, example1_params):
        env = self.env(phi1_annotated, example1_workspace, example1_params)
        with pytest.raises(ValueError):
            Trainer(small_config(), verbose=False).train(env, -1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        agent = DdpgAgent.create(small_config(), 5, 1, rng)
        path = save_checkpoint(agent, tmp_path / 'ckpt.json')
        again = load_checkpoint(path)
        x = rng.normal(size=(4, agent.state_dim))
        np.testing.assert_array_equal(again.actor(x), agent.actor(x))
        assert (again.n_states, again.m) == (5, 1)

    def test_wrong_format(self, tmp_path, rng):
        data = DdpgAgent.create(small_config(), 3, 1, rng).to_dict()
        data['format'] = 'something-else'
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps(data), encoding='utf-8')
        with pytest.raises(ValueError, match='Not a checkpoint'):
            load_checkpoint(path)

    def test_inconsistent_dimensions(self, rng):
        data = DdpgAgent.create(small_config(), 3, 1, rng).to_dict()
        data['n_states'] = 4
        with pytest.raises(ValueError, match='does not match'):
            DdpgAgent.from_dict(data)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / 'none.json')

    def test_policy_is_frozen(self, rng):
        agent = DdpgAgent.create(small_config(), 3, 1, rng)
        agent.actor.biases[-1][...] = [0.3, -0.3]
        policy = agent.policy()
        ps = ProductState(CarState(0.0, 0.0, 0.0), 0, VisitVector.ones(1))
        before = policy(ps)
        agent.actor.biases[-1][...] = 0.0
        assert policy(ps) == before
