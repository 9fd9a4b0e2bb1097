from __future__ import annotations

import numpy as np
import pytest
from pytest import fixture
from scipy.stats import chi2

from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.dynamics.dynamics_ensemble import (
    DynamicsConfig,
    DynamicsEnsemble,
    calibrate_threshold,
    predict,
    step_uncertainty,
    train_ensemble,
    trajectory_uncertainty,
)
from goplan.dynamics.oracle_ensemble import OracleEnsemble
from goplan.env.env_spec import EnvSpec
from goplan.env.environments import step
from goplan.env.scripted_controller import UniformRandomPolicy
from goplan.errors import ConfigurationError, UsageError
from goplan.numerics.gradient_check import gradient_check, gradient_check_passes
from goplan.numerics.losses import mean_squared_error
from goplan.numerics.rng_stream import RngStream
from goplan.planner.planner import Planner, PlannerConfig


class ShiftedModel(ADynamicsModel):
    """Member ``i`` moves every state by ``offsets[i]``."""

    def __init__(self, offsets):
        self.offsets = np.asarray(offsets, dtype=np.float64)

    @property
    def n_members(self) -> int:
        return len(self.offsets)

    def _predict_rows(self, index, states, actions):
        return states + self.offsets[index]


class MemberCountingOracle(OracleEnsemble):
    def __init__(self, spec, n_members):
        super().__init__(spec, n_members)
        self.rows_per_member = np.zeros(n_members, dtype=np.int64)

    def _predict_rows(self, index, states, actions):
        self.rows_per_member[index] += len(states)
        return super()._predict_rows(index, states, actions)


def linear_transitions(n: int, rng: RngStream, low=-1.0, high=1.0):
    states = rng.uniform(low, high, (n, 2))
    actions = rng.uniform(-1.0, 1.0, (n, 2))
    return states, actions, states + 0.1 * actions


@fixture
def small_config():
    return DynamicsConfig(members=5, hidden=(32, 32), batch_size=64)


@fixture
def trained(small_config):
    ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(0), dtype=np.float64)
    transitions = linear_transitions(2000, RngStream(1))
    report = ensemble.train(*transitions, epochs=30, rng=RngStream(2))
    return ensemble, report


def test_config_needs_two_members():
    with pytest.raises(ConfigurationError):
        DynamicsConfig(members=1)
    with pytest.raises(ConfigurationError):
        DynamicsConfig(holdout_fraction=0.0)


def test_oracle_members_agree_with_environment():
    spec = EnvSpec.two_corridor_reach()
    oracle = OracleEnsemble(spec, n_members=3)
    state, action = np.array([0.2, 0.2, 0.0, 0.0]), np.array([0.03, -0.01])
    np.testing.assert_array_equal(predict(oracle, 2, state, action), step(spec, state, action))
    assert step_uncertainty(oracle, state, action) == 0.0


def test_member_index_is_checked():
    model = ShiftedModel([0.0, 1.0])
    with pytest.raises(UsageError):
        model.predict(2, [0.0], [0.0])


def test_step_uncertainty_is_mean_squared_deviation():
    model = ShiftedModel([0.0, 2.0])
    assert step_uncertainty(model, np.array([0.5]), np.array([0.0])) == pytest.approx(1.0)
    batch = step_uncertainty(model, np.zeros((3, 1)), np.zeros((3, 1)))
    np.testing.assert_allclose(batch, [1.0, 1.0, 1.0])


def test_predict_members_routes_rows():
    model = ShiftedModel([0.0, 1.0, 10.0])
    out = model.predict_members([2, 0, 1], np.zeros((3, 1)), np.zeros((3, 1)))
    np.testing.assert_array_equal(out[:, 0], [10.0, 0.0, 1.0])


def test_trajectory_uncertainty_takes_the_worst_step():
    model = ShiftedModel([0.0, 2.0])
    states, actions = np.zeros((4, 1)), np.zeros((3, 1))
    assert trajectory_uncertainty(model, states, actions) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        trajectory_uncertainty(model, np.zeros((1, 1)), np.zeros((0, 1)))
    with pytest.raises(ConfigurationError):
        trajectory_uncertainty(model, np.zeros((6, 1)), actions)


def test_calibrated_threshold_is_stored():
    model = ShiftedModel([0.0, 2.0])
    threshold = calibrate_threshold(model, np.zeros((5, 1)), np.zeros((5, 1)), quantile=1.0)
    assert threshold == pytest.approx(1.0)
    assert model.threshold == threshold


def test_training_learns_linear_dynamics(trained):
    ensemble, report = trained
    assert len(report.history) == 31
    assert report.history[-1] < 0.1 * report.history[0]
    assert len(report.validation_mse) == 5
    assert len(report.holdout) == 200
    assert len(np.unique(report.holdout)) == 200


def test_uncertainty_grows_off_the_data(trained):
    ensemble, _ = trained
    states, actions, _ = linear_transitions(500, RngStream(3))
    shift = 3 * states.std(axis=0)
    near = np.mean(ensemble.step_uncertainty(states, actions))
    far = np.mean(ensemble.step_uncertainty(states + shift, actions))
    assert far >= 2 * near


def test_step_uncertainty_matches_brute_force(trained):
    ensemble, _ = trained
    states, actions, _ = linear_transitions(20, RngStream(13))
    fast = ensemble.step_uncertainty(states, actions)
    for row in range(20):
        members = [ensemble.predict(i, states[row], actions[row]) for i in range(5)]
        mean = sum(members) / 5
        slow = sum(float(np.sum((m - mean) ** 2)) for m in members) / 5
        assert fast[row] == pytest.approx(slow, abs=1e-6)


def test_member_loss_gradients_match_finite_differences():
    config = DynamicsConfig(members=2, hidden=(16, 16), activation="tanh")
    ensemble = DynamicsEnsemble(2, 2, config, RngStream(14), dtype=np.float64)
    states, actions, next_states = linear_transitions(32, RngStream(15))
    ensemble.fit_normalization(states, actions, next_states)
    member = ensemble.members[1]
    inputs = ensemble.normalize_inputs(states, actions)
    targets = (next_states - states - ensemble.output_mean) / ensemble.output_std

    member.zero_grad()
    _, grad = mean_squared_error(member.forward(inputs), targets)
    member.backward(grad)
    results = gradient_check(
        lambda: mean_squared_error(member.predict(inputs), targets)[0],
        member.params,
        RngStream(16),
        n_checks=100,
        h=1e-5,
    )
    assert gradient_check_passes(results)


def test_small_datasets_shrink_the_batch(small_config):
    ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(5))
    report = ensemble.train(*linear_transitions(100, RngStream(6)), epochs=1, rng=RngStream(7))
    assert report.batch_size == 10


def test_too_few_transitions_are_rejected(small_config):
    ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(5))
    with pytest.raises(ConfigurationError):
        ensemble.train(*linear_transitions(1, RngStream(6)), epochs=1, rng=RngStream(7))


def test_training_is_reproducible(small_config):
    results = []
    for _ in range(2):
        ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(8))
        ensemble.train(*linear_transitions(300, RngStream(9)), epochs=2, rng=RngStream(10))
        results.append(ensemble.state_tensors())
    assert results[0].keys() == results[1].keys()
    for key in results[0]:
        np.testing.assert_array_equal(results[0][key], results[1][key])


def test_state_tensors_round_trip(trained, small_config):
    ensemble, report = trained
    holdout = linear_transitions(2000, RngStream(1))
    calibrate_threshold(ensemble, holdout[0][report.holdout], holdout[1][report.holdout])
    clone = DynamicsEnsemble(2, 2, small_config, RngStream(11), dtype=np.float64)
    clone.load_state_tensors(ensemble.state_tensors())
    assert clone.threshold == ensemble.threshold
    states, actions, _ = linear_transitions(20, RngStream(12))
    np.testing.assert_array_equal(
        clone.predict_all(states, actions), ensemble.predict_all(states, actions)
    )


def test_train_ensemble_reports_member_validation(small_config):
    ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(17))
    mse = train_ensemble(ensemble, linear_transitions(300, RngStream(18)), 2, RngStream(19))
    assert len(mse) == 5
    assert all(np.isfinite(value) and value >= 0.0 for value in mse)


def test_zero_weight_member_predicts_the_mean_residual(small_config):
    ensemble = DynamicsEnsemble(2, 2, small_config, RngStream(20), dtype=np.float64)
    ensemble.fit_normalization(*linear_transitions(100, RngStream(21)))
    ensemble.members[3].fill(0.0)
    states, actions, _ = linear_transitions(10, RngStream(22))
    np.testing.assert_allclose(
        predict(ensemble, 3, states, actions), states + ensemble.output_mean, atol=1e-12
    )


@pytest.mark.parametrize("bootstrap", [True, False])
def test_bootstrap_resampling_separates_identical_members(bootstrap):
    config = DynamicsConfig(members=3, hidden=(16,), batch_size=16, bootstrap=bootstrap)
    ensemble = DynamicsEnsemble(2, 2, config, RngStream(23), dtype=np.float64)
    for member in ensemble.members[1:]:
        for param, source in zip(member.params, ensemble.members[0].params):
            param.values[:] = source.values
    ensemble.train(*linear_transitions(400, RngStream(24)), epochs=2, rng=RngStream(25))
    first, second = ensemble.members[0].weights[0].values, ensemble.members[1].weights[0].values
    assert np.array_equal(first, second) is not bootstrap


def test_rollout_members_are_drawn_uniformly():
    spec = EnvSpec.two_corridor_reach()
    ensemble = MemberCountingOracle(spec, 5)
    config = PlannerConfig(candidates=100, rollouts=10, depth=10)
    planner = Planner(spec, ensemble, UniformRandomPolicy(spec), config)
    planner.plan(np.array([0.2, 0.2, 0.0, 0.0]), np.array([0.8, 0.8]), RngStream(26))
    observed = ensemble.rows_per_member
    assert observed.sum() == 100 + 100 * 10 * 10
    expected = observed.sum() / 5
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    assert statistic < chi2.ppf(0.999, 4)
