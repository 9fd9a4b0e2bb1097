from __future__ import annotations

import logging
from enum import Enum

import numpy as np

from goplan.buffer.relabeled_batch import RelabeledBatch
from goplan.errors import ConfigurationError
from goplan.numerics.adam import AdamOptimizer
from goplan.numerics.losses import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    gaussian_negative_log_likelihood,
)
from goplan.numerics.mlp import build_mlp
from goplan.numerics.rng_stream import RngStream
from goplan.policy.gan_policy import GanPolicy, PolicyConfig


class BaselineKind(str, Enum):
    GAUSSIAN = "gaussian"
    WEIGHTED_GAUSSIAN = "weighted_gaussian"
    CGAN_UNWEIGHTED = "cgan_unweighted"


UNSUPPORTED_KINDS = ("cvae", "weighted_cvae")


class BaselineGenerator:
    """Comparison policies for the weighted CGAN.

    Gaussian kinds regress ``(mean, log_std)`` from ``(s, g)`` by weighted
    maximum likelihood; ``cgan_unweighted`` is a ``GanPolicy`` trained with
    unit weights.
    """

    def __init__(
        self,
        kind: BaselineKind | str,
        state_dim: int,
        action_dim: int,
        goal_dim: int,
        action_bound: float,
        config: PolicyConfig | None = None,
        rng: RngStream | None = None,
        dtype=np.float32,
    ) -> None:
        if kind in UNSUPPORTED_KINDS:
            raise NotImplementedError(f"baseline kind {kind!r} is not implemented")
        try:
            self.kind = BaselineKind(kind)
        except ValueError:
            raise ConfigurationError(f"unknown baseline kind {kind!r}") from None
        self._log = logging.getLogger(f"goplan.policy.BaselineGenerator.{self.kind.value}")
        self.config = config or PolicyConfig()
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.action_bound = float(action_bound)
        self.skipped_updates = 0
        rng = rng if rng is not None else RngStream(0)

        self.gan: GanPolicy | None = None
        self.net = None
        if self.kind == BaselineKind.CGAN_UNWEIGHTED:
            self.gan = GanPolicy(
                state_dim,
                action_dim,
                goal_dim,
                action_bound,
                self.config,
                rng=rng,
                dtype=dtype,
                name="baseline",
            )
        else:
            self.net = build_mlp(
                "baseline/gaussian",
                state_dim + goal_dim,
                2 * action_dim,
                list(self.config.hidden),
                hidden_activation=self.config.activation,
                rng=rng,
                dtype=dtype,
            )
            self.optimizer = AdamOptimizer(
                f"baseline.{self.kind.value}", self.net.params, lr=self.config.lr
            )

    @property
    def is_gaussian(self) -> bool:
        return self.net is not None

    def _inputs(self, states, goals) -> np.ndarray:
        return np.concatenate([np.atleast_2d(states), np.atleast_2d(goals)], axis=1)

    def mean_and_log_std(self, states, goals) -> tuple[np.ndarray, np.ndarray]:
        out = self.net.predict(self._inputs(states, goals)).astype(np.float64)
        mean = out[:, : self.action_dim]
        log_std = np.clip(out[:, self.action_dim :], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray:
        if self.gan is not None:
            return self.gan.sample_actions(states, goals, rng)
        mean, log_std = self.mean_and_log_std(states, goals)
        noise = rng.gaussian(mean.shape, dtype=np.float64)
        return np.clip(mean + np.exp(log_std) * noise, -self.action_bound, self.action_bound)

    def likelihood_update(self, batch: RelabeledBatch, weights=None) -> float:
        if self.kind == BaselineKind.GAUSSIAN:
            weights = None
        out = self.net.forward(self._inputs(batch.states, batch.goals))
        loss, d_mean, d_log_std = gaussian_negative_log_likelihood(
            out[:, : self.action_dim], out[:, self.action_dim :], batch.actions, weights
        )
        if not np.isfinite(loss):
            self.net.clear_tape()
            self.skipped_updates += 1
            self.optimizer.skip("non-finite likelihood")
            return loss
        self.net.backward(np.concatenate([d_mean, d_log_std], axis=1))
        if not self.optimizer.step():
            self.skipped_updates += 1
        return loss

    def update(self, batch: RelabeledBatch, weights, rng: RngStream) -> dict[str, float]:
        if self.gan is not None:
            unit = np.ones(len(batch))
            return {
                "discriminator": self.gan.discriminator_update(batch, unit, rng),
                "generator": self.gan.generator_update(batch.states, batch.goals, rng),
            }
        return {"likelihood": self.likelihood_update(batch, weights)}

    def state_tensors(self) -> dict[str, np.ndarray]:
        if self.gan is not None:
            return self.gan.state_tensors()
        return self.net.state_tensors()

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        if self.gan is not None:
            self.gan.load_state_tensors(tensors)
        else:
            self.net.load_state_tensors(tensors)


def draw_minibatch(
    dataset: RelabeledBatch, weights, batch_size: int, rng: RngStream
) -> tuple[RelabeledBatch, np.ndarray | None]:
    rows = rng.integers(len(dataset), size=min(batch_size, len(dataset)))
    minibatch = RelabeledBatch(
        dataset.states[rows],
        dataset.actions[rows],
        dataset.goals[rows],
        dataset.rewards[rows],
        dataset.next_states[rows],
        dataset.dones[rows],
        dataset.relabeled[rows],
    )
    return minibatch, None if weights is None else np.asarray(weights)[rows]


def fit_baseline(
    kind: BaselineKind | str,
    dataset: RelabeledBatch,
    weights,
    action_bound: float,
    steps: int,
    batch_size: int = 256,
    config: PolicyConfig | None = None,
    rng: RngStream | None = None,
    dtype=np.float32,
) -> BaselineGenerator:
    if len(dataset) == 0:
        raise ConfigurationError("cannot fit a baseline on an empty dataset")
    rng = rng if rng is not None else RngStream(0)
    baseline = BaselineGenerator(
        kind,
        dataset.states.shape[1],
        dataset.actions.shape[1],
        dataset.goals.shape[1],
        action_bound,
        config,
        rng=rng.split(0),
        dtype=dtype,
    )
    train_rng = rng.split(1)
    for _ in range(steps):
        minibatch, minibatch_weights = draw_minibatch(
            dataset, weights, batch_size, train_rng
        )
        baseline.update(minibatch, minibatch_weights, train_rng)
    baseline._log.info(f"fitted {baseline.kind.value} baseline for {steps} steps")
    return baseline
