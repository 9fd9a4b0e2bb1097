from __future__ import annotations

import numpy as np
import pytest
from pytest import fixture
from sklearn.cluster import KMeans

from goplan.buffer.relabeled_batch import RelabeledBatch
from goplan.critic.value_function import CriticConfig, ValueFunction
from goplan.env.env_spec import DEFAULT_BANDIT_MODES
from goplan.errors import ConfigurationError
from goplan.numerics.gradient_check import gradient_check, gradient_check_passes
from goplan.numerics.losses import sigmoid_cross_entropy_terms
from goplan.numerics.rng_stream import RngStream
from goplan.policy.action_sampler import ActionSampler
from goplan.policy.baseline_generator import BaselineGenerator, fit_baseline
from goplan.policy.gan_policy import GanPolicy, PolicyConfig, act
from goplan.policy.mode_metrics import mode_separation_metrics
from goplan.policy.weighted_gan_trainer import COMPONENTS, WeightedGanTrainer

BOUND = 1.0


def action_batch(actions, states=None) -> RelabeledBatch:
    actions = np.asarray(actions, dtype=np.float64).reshape(-1, 1)
    n = len(actions)
    states = np.zeros((n, 1)) if states is None else np.asarray(states).reshape(-1, 1)
    return RelabeledBatch(
        states=states,
        actions=actions,
        goals=states.copy(),
        rewards=np.zeros(n),
        next_states=states.copy(),
        dones=np.zeros(n, dtype=bool),
        relabeled=np.zeros(n, dtype=bool),
    )


def bimodal_batch(n: int, rng: RngStream, spread=0.02) -> RelabeledBatch:
    generator = rng.next_generator()
    centers = np.where(generator.random(n) < 0.5, -0.5, 0.5)
    return action_batch(centers + spread * generator.standard_normal(n))


@fixture
def config():
    return PolicyConfig(hidden=(32, 32), activation="tanh", lr=1e-3, noise_dim=4)


@fixture
def policy(config):
    return GanPolicy(1, 1, 1, BOUND, config, RngStream(0))


@fixture
def policy64(config):
    return GanPolicy(1, 1, 1, BOUND, config, RngStream(0), dtype=np.float64)


def test_policy_is_an_action_sampler(policy):
    assert isinstance(policy, ActionSampler)


def test_zero_generator_gives_zero_action(policy):
    policy.generator.fill(0.0)
    root = RngStream(1)
    for draw in range(5):
        np.testing.assert_array_equal(act(policy, [0.3], [0.3], root.split(draw)), [0.0])


def test_same_noise_gives_same_action(policy):
    z = policy.draw_noise(3, RngStream(2))
    states = np.array([[0.1], [0.2], [0.3]])
    np.testing.assert_array_equal(
        policy.generate(states, states, z), policy.generate(states, states, z)
    )


def test_actions_and_probabilities_stay_in_range(policy):
    policy.generator.weights[-1].values *= 100.0
    states = RngStream(3).uniform(-1, 1, (256, 1))
    actions = policy.sample_actions(states, states, RngStream(4))
    assert np.all(np.abs(actions) <= BOUND)
    probability = policy.discriminator_probability(states, actions * 1e3, states)
    assert np.all((probability > 0) & (probability < 1))


def test_unit_weights_match_unweighted_objective(policy):
    batch = bimodal_batch(32, RngStream(5))
    fake = policy.sample_actions(batch.states, batch.goals, RngStream(6))
    weighted = policy.discriminator_loss_and_grads(batch, np.ones(32), fake)
    grads = [p.grad.copy() for p in policy.discriminator.params]
    policy.discriminator.zero_grad()
    plain = policy.discriminator_loss_and_grads(batch, None, fake)
    assert weighted == pytest.approx(plain, rel=1e-12)
    for before, p in zip(grads, policy.discriminator.params):
        np.testing.assert_array_equal(before, p.grad)


def test_zero_weights_leave_only_the_fake_term(policy):
    fake = np.full((16, 1), 0.1)
    first = bimodal_batch(16, RngStream(7))
    policy.discriminator.zero_grad()
    policy.discriminator_loss_and_grads(first, np.zeros(16), fake)
    grads = [p.grad.copy() for p in policy.discriminator.params]

    second = action_batch(np.full(16, -0.9))
    policy.discriminator.zero_grad()
    policy.discriminator_loss_and_grads(second, np.zeros(16), fake)
    for before, p in zip(grads, policy.discriminator.params):
        np.testing.assert_allclose(before, p.grad, rtol=1e-6, atol=1e-7)


def test_discriminator_separates_fixed_real_and_fake():
    policy = GanPolicy(1, 1, 1, BOUND, PolicyConfig(hidden=(32, 32), lr=1e-2), RngStream(8))
    policy.generator.weights[-1].values[:] = 0.0
    policy.generator.biases[-1].values[:] = 0.0
    batch = action_batch(np.full(64, 0.5))
    root = RngStream(9)
    for step in range(300):
        policy.discriminator_update(batch, np.ones(64), root.split(step))
    assert policy.discriminator_probability(batch.states, batch.actions, batch.goals).mean() > 0.9
    fake = np.zeros((64, 1))
    assert policy.discriminator_probability(batch.states, fake, batch.goals).mean() < 0.1


def test_flat_discriminator_gives_zero_generator_gradient(policy):
    policy.discriminator.fill(0.0)
    states = np.linspace(-1, 1, 8)[:, None]
    policy.generator.zero_grad()
    policy.generator_loss_and_grads(states, states, policy.draw_noise(8, RngStream(10)))
    for p in policy.generator.params:
        assert np.allclose(p.grad, 0.0)


@pytest.mark.parametrize("minimax", [False, True])
def test_generator_gradients_match_finite_differences(minimax):
    config = PolicyConfig(hidden=(16, 16), activation="tanh", noise_dim=3, minimax=minimax)
    policy = GanPolicy(1, 1, 1, 0.8, config, RngStream(11), dtype=np.float64)
    states = np.linspace(-1, 1, 10)[:, None]
    z = policy.draw_noise(10, RngStream(12))
    policy.generator.zero_grad()
    policy.generator_loss_and_grads(states, states, z)
    results = gradient_check(
        lambda: policy.generator_loss(states, states, z),
        policy.generator.params,
        RngStream(13),
        n_checks=100,
        h=1e-5,
    )
    assert gradient_check_passes(results)


def test_discriminator_gradients_match_finite_differences(policy64):
    batch = bimodal_batch(12, RngStream(14))
    weights = np.linspace(0.5, 2.0, 12)
    fake = policy64.sample_actions(batch.states, batch.goals, RngStream(15))

    def loss_fn():
        real = policy64.discriminator_logits(batch.states, batch.actions, batch.goals)[:, None]
        made = policy64.discriminator_logits(batch.states, fake, batch.goals)[:, None]
        real_loss, _ = sigmoid_cross_entropy_terms(real, positive=True, weights=weights)
        fake_loss, _ = sigmoid_cross_entropy_terms(made, positive=False)
        return real_loss + fake_loss

    policy64.discriminator.zero_grad()
    policy64.discriminator_loss_and_grads(batch, weights, fake)
    results = gradient_check(
        loss_fn, policy64.discriminator.params, RngStream(16), n_checks=100, h=1e-5
    )
    assert gradient_check_passes(results)


def test_generator_step_decreases_its_loss():
    config = PolicyConfig(hidden=(16, 16), activation="tanh", lr=1e-4, noise_dim=3)
    policy = GanPolicy(1, 1, 1, BOUND, config, RngStream(17), dtype=np.float64)
    states = np.linspace(-1, 1, 32)[:, None]
    z = policy.draw_noise(32, RngStream(18))
    before = policy.generator_loss(states, states, z)
    policy.generator_update(states, states, RngStream(18))
    assert policy.generator_loss(states, states, z) < before


def test_weighted_trainer_reports_every_component(policy):
    critic = ValueFunction(1, 1, CriticConfig(hidden=(8,)), RngStream(19))
    trainer = WeightedGanTrainer(critic, policy)
    recorded = []
    trainer.run(
        3,
        lambda stream: bimodal_batch(16, stream),
        RngStream(20),
        record=lambda step, component, loss: recorded.append((step, component)),
    )
    assert recorded == [(step, name) for step in range(3) for name in COMPONENTS]


def test_single_mode_gaussian_fits_the_center(config):
    dataset = action_batch(0.3 + 0.02 * RngStream(21).gaussian(512, dtype=np.float64))
    fitted = fit_baseline(
        "gaussian", dataset, None, BOUND, steps=1500, batch_size=128,
        config=PolicyConfig(hidden=(32, 32), lr=3e-3), rng=RngStream(22),
    )
    mean, _ = fitted.mean_and_log_std(np.zeros((1, 1)), np.zeros((1, 1)))
    assert mean[0, 0] == pytest.approx(0.3, abs=0.02)


def test_equal_weights_reproduce_the_gaussian_fit(config):
    dataset = bimodal_batch(128, RngStream(23))
    plain = fit_baseline("gaussian", dataset, None, BOUND, 50, 32, config, RngStream(24))
    weighted = fit_baseline(
        "weighted_gaussian", dataset, np.full(128, 3.0), BOUND, 50, 32, config, RngStream(24)
    )
    for a, b in zip(plain.net.params, weighted.net.params):
        np.testing.assert_allclose(a.values, b.values, rtol=1e-6, atol=1e-7)


def test_gaussian_interpolates_between_modes(config):
    dataset = bimodal_batch(512, RngStream(25))
    fitted = fit_baseline(
        "gaussian", dataset, None, BOUND, steps=1500, batch_size=128,
        config=PolicyConfig(hidden=(32, 32), lr=3e-3), rng=RngStream(26),
    )
    mean, _ = fitted.mean_and_log_std(np.zeros((1, 1)), np.zeros((1, 1)))
    assert -0.3 < mean[0, 0] < 0.3


def test_cvae_kinds_are_not_implemented():
    with pytest.raises(NotImplementedError):
        BaselineGenerator("cvae", 1, 1, 1, BOUND)


def test_mode_separation_metrics_edges():
    on_modes = np.array([-0.6, 0.0, 0.6, 0.6])
    assert mode_separation_metrics(on_modes, DEFAULT_BANDIT_MODES, 0.15) == (0.0, 0.5)
    midway = np.full(10, 0.3)
    assert mode_separation_metrics(midway, DEFAULT_BANDIT_MODES, 0.15) == (1.0, 0.0)
    with pytest.raises(ConfigurationError):
        mode_separation_metrics(np.array([]), DEFAULT_BANDIT_MODES, 0.15)


@pytest.mark.slow
def test_trained_gan_actions_cluster_at_dataset_modes():
    config = PolicyConfig(hidden=(64, 64), lr=1e-3, noise_dim=4)
    policy = GanPolicy(1, 1, 1, BOUND, config, RngStream(27))
    root = RngStream(28)
    for step in range(4000):
        stream = root.split(step)
        batch = bimodal_batch(128, stream.split(0))
        policy.discriminator_update(batch, np.ones(128), stream.split(1))
        policy.generator_update(batch.states, batch.goals, stream.split(2))

    samples = policy.sample_actions(np.zeros((1000, 1)), np.zeros((1000, 1)), RngStream(29))
    kmeans = KMeans(n_clusters=2, n_init=10, random_state=0).fit(samples)
    centers = np.sort(kmeans.cluster_centers_[:, 0])
    np.testing.assert_allclose(centers, [-0.5, 0.5], atol=0.1)
