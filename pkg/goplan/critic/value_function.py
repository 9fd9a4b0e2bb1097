from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from goplan.buffer.relabeled_batch import RelabeledBatch, RelabeledSample
from goplan.errors import ConfigurationError
from goplan.numerics.adam import AdamOptimizer
from goplan.numerics.losses import mean_squared_error
from goplan.numerics.mlp import build_mlp
from goplan.numerics.rng_stream import RngStream


@dataclass(frozen=True)
class CriticConfig:
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    lr: float = 1e-3
    gamma: float = 0.98
    polyak: float = 0.995
    beta: float = 1.0
    weight_max: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"discount must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.polyak <= 1.0:
            raise ConfigurationError(f"polyak rate must lie in [0, 1], got {self.polyak}")
        if not self.beta > 0 or not self.weight_max > 0:
            raise ConfigurationError("beta and weight_max must be > 0")

    @classmethod
    def from_settings(cls, settings) -> "CriticConfig":
        return cls(
            hidden=tuple(settings.get(["network.hidden"])),
            activation=settings.get(["network.activation"]),
            lr=settings.get_float(["network.lr"]),
            gamma=settings.get_float(["critic.gamma"]),
            polyak=settings.get_float(["critic.polyak"]),
            beta=settings.get_float(["critic.beta"]),
            weight_max=settings.get_float(["critic.weight_max"]),
        )


class ValueFunction:
    """Goal-conditioned V(s, g) trained by one-step TD with a polyak target."""

    def __init__(
        self,
        state_dim: int,
        goal_dim: int,
        config: CriticConfig | None = None,
        rng: RngStream | None = None,
        dtype=np.float32,
    ) -> None:
        self._log = logging.getLogger("goplan.critic.ValueFunction")
        self.config = config or CriticConfig()
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        self.net = build_mlp(
            "critic/value",
            state_dim + goal_dim,
            1,
            list(self.config.hidden),
            hidden_activation=self.config.activation,
            rng=rng,
            dtype=dtype,
        )
        self.target = self.net.copy()
        self.optimizer = AdamOptimizer("critic", self.net.params, lr=self.config.lr)
        self.skipped_updates = 0

    @property
    def gamma(self) -> float:
        return self.config.gamma

    def _inputs(self, states, goals) -> np.ndarray:
        return np.concatenate(
            [np.atleast_2d(states), np.atleast_2d(goals)], axis=1
        )

    def value(self, states, goals, target: bool = False) -> np.ndarray:
        net = self.target if target else self.net
        return net.predict(self._inputs(states, goals))[:, 0].astype(np.float64)

    def td_targets(self, batch: RelabeledBatch) -> np.ndarray:
        bootstrap = self.value(batch.next_states, batch.goals, target=True)
        return batch.rewards + self.gamma * (1.0 - batch.dones) * bootstrap

    def td_update(self, batch: RelabeledBatch) -> float:
        if len(batch) == 0:
            raise ConfigurationError("TD update needs a non-empty batch")
        targets = self.td_targets(batch)
        prediction = self.net.forward(self._inputs(batch.states, batch.goals))
        loss, grad = mean_squared_error(prediction, targets[:, None])
        if not np.isfinite(loss):
            self.net.clear_tape()
            self.skipped_updates += 1
            self.optimizer.skip("non-finite TD loss")
            return loss
        self.net.backward(grad)
        if not self.optimizer.step():
            self.skipped_updates += 1
            return loss
        self.target.polyak_from(self.net, self.config.polyak)
        return loss

    def advantages(self, batch: RelabeledBatch) -> np.ndarray:
        bootstrap = self.value(batch.next_states, batch.goals)
        baseline = self.value(batch.states, batch.goals)
        return batch.rewards + self.gamma * (1.0 - batch.dones) * bootstrap - baseline

    def weights(self, batch: RelabeledBatch) -> np.ndarray:
        return exponential_weight(
            self.advantages(batch), self.config.beta, self.config.weight_max
        )

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors = self.net.state_tensors()
        tensors.update(self.target.state_tensors(prefix="critic/target"))
        return tensors

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        self.net.load_state_tensors(tensors)
        self.target.load_state_tensors(tensors, prefix="critic/target")


def exponential_weight(advantages, beta: float, weight_max: float) -> np.ndarray:
    """clip(exp(A / beta), 0, weight_max), computed without overflow."""
    advantages = np.asarray(advantages, dtype=np.float64)
    exponent = np.minimum(advantages / beta, np.log(weight_max))
    return np.clip(np.exp(exponent), 0.0, weight_max)


def td_update(vf: ValueFunction, batch: RelabeledBatch) -> float:
    return vf.td_update(batch)


def advantage_weight(vf: ValueFunction, sample: RelabeledSample | RelabeledBatch):
    if isinstance(sample, RelabeledSample):
        sample = RelabeledBatch(
            states=sample.s[None],
            actions=sample.a[None],
            goals=sample.g[None],
            rewards=np.array([sample.r]),
            next_states=sample.s_next[None],
            dones=np.array([sample.done]),
            relabeled=np.array([False]),
        )
        return float(vf.weights(sample)[0])
    return vf.weights(sample)
