from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.errors import ConfigurationError
from goplan.numerics.adam import AdamOptimizer
from goplan.numerics.losses import mean_squared_error
from goplan.numerics.mlp import Mlp, build_mlp
from goplan.numerics.rng_stream import RngStream

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class DynamicsConfig:
    members: int = 5
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    lr: float = 1e-3
    batch_size: int = 256
    holdout_fraction: float = 0.1
    bootstrap: bool = True
    uncertainty_quantile: float = 0.9

    def __post_init__(self):
        if self.members < 2:
            raise ConfigurationError(f"an ensemble needs >= 2 members, got {self.members}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigurationError("holdout fraction must lie in (0, 1)")
        if not 0.0 <= self.uncertainty_quantile <= 1.0:
            raise ConfigurationError("uncertainty quantile must lie in [0, 1]")

    @classmethod
    def from_settings(cls, settings) -> "DynamicsConfig":
        return cls(
            members=settings.get_int(["dynamics.members"]),
            hidden=tuple(settings.get(["network.hidden"])),
            activation=settings.get(["network.activation"]),
            lr=settings.get_float(["network.lr"]),
            batch_size=settings.get_int(["dynamics.batch_size"]),
            holdout_fraction=settings.get_float(["dynamics.holdout_fraction"]),
            bootstrap=settings.get_boolean(["dynamics.bootstrap"]),
            uncertainty_quantile=settings.get_float(["dynamics.uncertainty_quantile"]),
        )


@dataclass
class EnsembleTrainingReport:
    validation_mse: list[float]
    history: list[float] = field(default_factory=list)
    batch_size: int = 0
    holdout: np.ndarray | None = field(default=None, repr=False)


class DynamicsEnsemble(ADynamicsModel):
    """N residual models ``s' = s + denorm(net(norm(s, a)))`` sharing one set
    of normalization statistics."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        config: DynamicsConfig | None = None,
        rng: RngStream | None = None,
        dtype=np.float32,
    ) -> None:
        self._log = logging.getLogger("goplan.dynamics.DynamicsEnsemble")
        self.config = config or DynamicsConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        rng = rng if rng is not None else RngStream(0)
        self.members: list[Mlp] = [
            build_mlp(
                f"dynamics/member{index}",
                state_dim + action_dim,
                state_dim,
                list(self.config.hidden),
                hidden_activation=self.config.activation,
                rng=rng.split(index),
                dtype=dtype,
            )
            for index in range(self.config.members)
        ]
        self.optimizers = [
            AdamOptimizer(f"dynamics.member{index}", member.params, lr=self.config.lr)
            for index, member in enumerate(self.members)
        ]
        self.input_mean = np.zeros(state_dim + action_dim)
        self.input_std = np.ones(state_dim + action_dim)
        self.output_mean = np.zeros(state_dim)
        self.output_std = np.ones(state_dim)
        self.threshold: float | None = None

    @property
    def n_members(self) -> int:
        return len(self.members)

    def fit_normalization(self, states, actions, next_states):
        inputs = np.concatenate([states, actions], axis=1)
        residuals = next_states - states
        self.input_mean = inputs.mean(axis=0)
        self.input_std = np.maximum(inputs.std(axis=0), STD_FLOOR)
        self.output_mean = residuals.mean(axis=0)
        self.output_std = np.maximum(residuals.std(axis=0), STD_FLOOR)

    def normalize_inputs(self, states, actions) -> np.ndarray:
        inputs = np.concatenate([states, actions], axis=1)
        return (inputs - self.input_mean) / self.input_std

    def _predict_rows(self, index: int, states: np.ndarray, actions: np.ndarray):
        out = self.members[index].predict(self.normalize_inputs(states, actions))
        return states + out.astype(np.float64) * self.output_std + self.output_mean

    def validation_mse(self, index: int, states, actions, next_states) -> float:
        prediction = self._predict_rows(index, states, actions)
        return float(np.mean((prediction - next_states) ** 2))

    def train(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        next_states: np.ndarray,
        epochs: int,
        rng: RngStream,
    ) -> EnsembleTrainingReport:
        n = len(states)
        if n < 2:
            raise ConfigurationError("dynamics training needs at least 2 transitions")
        batch_size = self.config.batch_size
        if n < 2 * self.n_members * batch_size:
            batch_size = max(1, n // (2 * self.n_members))
            self._log.warning(
                f"{n} transitions is less than 2*N*batch, batch shrunk to {batch_size}"
            )

        order = rng.permutation(n)
        n_holdout = max(1, int(round(self.config.holdout_fraction * n)))
        holdout, train = order[:n_holdout], order[n_holdout:]
        self.fit_normalization(states[train], actions[train], next_states[train])
        held = (states[holdout], actions[holdout], next_states[holdout])

        member_rows = []
        for index in range(self.n_members):
            if self.config.bootstrap:
                member_rows.append(train[rng.split(index).integers(len(train), size=len(train))])
            else:
                member_rows.append(train)

        history = [self._mean_validation(*held)]
        for epoch in range(epochs):
            epoch_stream = rng.split(self.n_members + epoch)
            for index in range(self.n_members):
                member_stream = (
                    epoch_stream.split(index) if self.config.bootstrap else epoch_stream.split(0)
                )
                rows = member_rows[index][member_stream.permutation(len(member_rows[index]))]
                self._train_member_epoch(index, rows, states, actions, next_states, batch_size)
            history.append(self._mean_validation(*held))
            self._log.debug(f"epoch {epoch}: validation mse {history[-1]:.6g}")

        report = EnsembleTrainingReport(
            validation_mse=[self.validation_mse(i, *held) for i in range(self.n_members)],
            history=history,
            batch_size=batch_size,
            holdout=holdout,
        )
        self._log.info(
            f"trained {self.n_members} members for {epochs} epochs, "
            f"validation mse {np.mean(report.validation_mse):.6g}"
        )
        return report

    def _train_member_epoch(self, index, rows, states, actions, next_states, batch_size):
        member = self.members[index]
        optimizer = self.optimizers[index]
        for start in range(0, len(rows), batch_size):
            batch = rows[start : start + batch_size]
            inputs = self.normalize_inputs(states[batch], actions[batch])
            targets = (next_states[batch] - states[batch] - self.output_mean) / self.output_std
            prediction = member.forward(inputs)
            loss, grad = mean_squared_error(prediction, targets)
            if not np.isfinite(loss):
                member.clear_tape()
                optimizer.skip("non-finite dynamics loss")
                continue
            member.backward(grad)
            optimizer.step()

    def _mean_validation(self, states, actions, next_states) -> float:
        return float(
            np.mean(
                [
                    self.validation_mse(i, states, actions, next_states)
                    for i in range(self.n_members)
                ]
            )
        )

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {}
        for member in self.members:
            tensors.update(member.state_tensors())
        tensors["dynamics/input_mean"] = self.input_mean
        tensors["dynamics/input_std"] = self.input_std
        tensors["dynamics/output_mean"] = self.output_mean
        tensors["dynamics/output_std"] = self.output_std
        if self.threshold is not None:
            tensors["dynamics/uncertainty_threshold"] = np.array([self.threshold])
        return tensors

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        for member in self.members:
            member.load_state_tensors(tensors)
        self.input_mean = np.asarray(tensors["dynamics/input_mean"], dtype=np.float64)
        self.input_std = np.asarray(tensors["dynamics/input_std"], dtype=np.float64)
        self.output_mean = np.asarray(tensors["dynamics/output_mean"], dtype=np.float64)
        self.output_std = np.asarray(tensors["dynamics/output_std"], dtype=np.float64)
        if "dynamics/uncertainty_threshold" in tensors:
            self.threshold = float(tensors["dynamics/uncertainty_threshold"][0])


def calibrate_threshold(
    ensemble: ADynamicsModel, states, actions, quantile: float = 0.9
) -> float:
    """Sets and returns u, the ``quantile`` of step uncertainty over the given transitions."""
    uncertainty = ensemble.step_uncertainty(np.atleast_2d(states), np.atleast_2d(actions))
    ensemble.threshold = float(np.quantile(np.atleast_1d(uncertainty), quantile))
    return ensemble.threshold


def train_ensemble(
    ensemble: DynamicsEnsemble, transitions, epochs: int, rng: RngStream
) -> list[float]:
    states, actions, next_states = transitions
    return ensemble.train(states, actions, next_states, epochs, rng).validation_mse


def predict(ensemble: ADynamicsModel, i: int, s, a) -> np.ndarray:
    return ensemble.predict(i, s, a)


def step_uncertainty(ensemble: ADynamicsModel, s, a):
    return ensemble.step_uncertainty(s, a)


def trajectory_uncertainty(ensemble: ADynamicsModel, states, actions) -> float:
    return ensemble.trajectory_uncertainty(states, actions)
