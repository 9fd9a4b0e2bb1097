from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from goplan.buffer.relabeled_batch import RelabeledBatch
from goplan.errors import ConfigurationError
from goplan.numerics.adam import AdamOptimizer
from goplan.numerics.losses import sigmoid, sigmoid_cross_entropy_terms
from goplan.numerics.mlp import build_mlp
from goplan.numerics.rng_stream import RngStream

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class PolicyConfig:
    hidden: tuple[int, ...] = (256, 256)
    activation: str = "relu"
    lr: float = 1e-3
    noise_dim: int = 8
    minimax: bool = False

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ConfigurationError(f"noise dim must be >= 1, got {self.noise_dim}")

    @classmethod
    def from_settings(cls, settings) -> "PolicyConfig":
        return cls(
            hidden=tuple(settings.get(["network.hidden"])),
            activation=settings.get(["network.activation"]),
            lr=settings.get_float(["network.lr"]),
            noise_dim=settings.get_int(["policy.noise_dim"]),
            minimax=settings.get_boolean(["policy.minimax"]),
        )


class GanPolicy:
    """Conditional GAN policy.

    The generator maps ``(s, g, z)`` through a tanh head scaled by the
    action bound. The discriminator returns a logit for ``(s, a, g)``; its
    probability is the clipped sigmoid of that logit. Real rows enter the
    discriminator loss with their advantage weight, fake rows unweighted.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        goal_dim: int,
        action_bound: float,
        config: PolicyConfig | None = None,
        rng: RngStream | None = None,
        dtype=np.float32,
        name: str = "policy",
    ) -> None:
        self._log = logging.getLogger(f"goplan.policy.GanPolicy.{name}")
        self.config = config or PolicyConfig()
        self.name = name
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.action_bound = float(action_bound)
        rng = rng if rng is not None else RngStream(0)
        self.generator = build_mlp(
            f"{name}/generator",
            state_dim + goal_dim + self.config.noise_dim,
            action_dim,
            list(self.config.hidden),
            hidden_activation=self.config.activation,
            output_activation="tanh",
            rng=rng.split(0),
            dtype=dtype,
        )
        self.discriminator = build_mlp(
            f"{name}/discriminator",
            state_dim + action_dim + goal_dim,
            1,
            list(self.config.hidden),
            hidden_activation=self.config.activation,
            rng=rng.split(1),
            dtype=dtype,
        )
        self.generator_optimizer = AdamOptimizer(
            f"{name}.generator", self.generator.params, lr=self.config.lr
        )
        self.discriminator_optimizer = AdamOptimizer(
            f"{name}.discriminator", self.discriminator.params, lr=self.config.lr
        )
        self.skipped_updates = 0

    @property
    def noise_dim(self) -> int:
        return self.config.noise_dim

    def draw_noise(self, n: int, rng: RngStream) -> np.ndarray:
        return rng.gaussian((n, self.noise_dim), dtype=np.float64)

    def _generator_inputs(self, states, goals, z) -> np.ndarray:
        return np.concatenate(
            [np.atleast_2d(states), np.atleast_2d(goals), np.atleast_2d(z)], axis=1
        )

    def _discriminator_inputs(self, states, actions, goals) -> np.ndarray:
        return np.concatenate(
            [np.atleast_2d(states), np.atleast_2d(actions), np.atleast_2d(goals)], axis=1
        )

    def generate(self, states, goals, z) -> np.ndarray:
        out = self.generator.predict(self._generator_inputs(states, goals, z))
        return self.action_bound * out.astype(np.float64)

    def act(self, state, goal, rng: RngStream) -> np.ndarray:
        return self.generate(state, goal, self.draw_noise(1, rng))[0]

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray:
        states = np.atleast_2d(states)
        return self.generate(states, goals, self.draw_noise(len(states), rng))

    def discriminator_logits(self, states, actions, goals) -> np.ndarray:
        inputs = self._discriminator_inputs(states, actions, goals)
        return self.discriminator.predict(inputs)[:, 0].astype(np.float64)

    def discriminator_probability(self, states, actions, goals) -> np.ndarray:
        probability = sigmoid(self.discriminator_logits(states, actions, goals))
        return np.clip(probability, PROBABILITY_FLOOR, 1 - PROBABILITY_FLOOR)

    def discriminator_loss_and_grads(
        self, batch: RelabeledBatch, weights, fake_actions: np.ndarray
    ) -> float:
        """-mean(w log D(real)) - mean(log(1 - D(fake))); grads land on D only."""
        n = len(batch)
        real = self._discriminator_inputs(batch.states, batch.actions, batch.goals)
        fake = self._discriminator_inputs(batch.states, fake_actions, batch.goals)
        logits = self.discriminator.forward(np.concatenate([real, fake]))
        real_loss, real_grad = sigmoid_cross_entropy_terms(
            logits[:n], positive=True, weights=weights
        )
        fake_loss, fake_grad = sigmoid_cross_entropy_terms(logits[n:], positive=False)
        loss = real_loss + fake_loss
        if not np.isfinite(loss):
            self.discriminator.clear_tape()
            return loss
        self.discriminator.backward(np.concatenate([real_grad, fake_grad]))
        return loss

    def discriminator_update(
        self, batch: RelabeledBatch, weights, rng: RngStream
    ) -> float:
        fake_actions = self.sample_actions(batch.states, batch.goals, rng)
        self.discriminator.zero_grad()
        loss = self.discriminator_loss_and_grads(batch, weights, fake_actions)
        if not np.isfinite(loss):
            self.skipped_updates += 1
            self.discriminator_optimizer.skip("non-finite discriminator loss")
        elif not self.discriminator_optimizer.step():
            self.skipped_updates += 1
        return loss

    def generator_loss(self, states, goals, z) -> float:
        actions = self.generate(states, goals, z)
        logits = self.discriminator_logits(states, actions, goals)[:, None]
        if self.config.minimax:
            value, _ = sigmoid_cross_entropy_terms(logits, positive=False)
            return -value
        value, _ = sigmoid_cross_entropy_terms(logits, positive=True)
        return value

    def generator_loss_and_grads(self, states, goals, z) -> float:
        """Backpropagates through the discriminator input into the generator."""
        out = self.generator.forward(self._generator_inputs(states, goals, z))
        actions = self.action_bound * out
        logits = self.discriminator.forward(
            self._discriminator_inputs(states, actions, goals)
        )
        if self.config.minimax:
            value, grad = sigmoid_cross_entropy_terms(logits, positive=False)
            value, grad = -value, -grad
        else:
            value, grad = sigmoid_cross_entropy_terms(logits, positive=True)
        if not np.isfinite(value):
            self.discriminator.clear_tape()
            self.generator.clear_tape()
            return value

        input_grad = self.discriminator.backward(grad)
        self.discriminator.zero_grad()
        action_grad = input_grad[:, self.state_dim : self.state_dim + self.action_dim]
        self.generator.backward(self.action_bound * action_grad)
        return value

    def generator_update(self, states, goals, rng: RngStream) -> float:
        states = np.atleast_2d(states)
        z = self.draw_noise(len(states), rng)
        self.generator.zero_grad()
        loss = self.generator_loss_and_grads(states, goals, z)
        if not np.isfinite(loss):
            self.skipped_updates += 1
            self.generator_optimizer.skip("non-finite generator loss")
        elif not self.generator_optimizer.step():
            self.skipped_updates += 1
        return loss

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors = self.generator.state_tensors()
        tensors.update(self.discriminator.state_tensors())
        return tensors

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        self.generator.load_state_tensors(tensors)
        self.discriminator.load_state_tensors(tensors)

    def copy(self) -> "GanPolicy":
        clone = object.__new__(GanPolicy)
        clone.__dict__.update(self.__dict__)
        clone.generator = self.generator.copy()
        clone.discriminator = self.discriminator.copy()
        clone.generator_optimizer = AdamOptimizer(
            f"{self.name}.generator", clone.generator.params, lr=self.config.lr
        )
        clone.discriminator_optimizer = AdamOptimizer(
            f"{self.name}.discriminator", clone.discriminator.params, lr=self.config.lr
        )
        return clone


def act(policy: GanPolicy, s, g, rng: RngStream) -> np.ndarray:
    return policy.act(s, g, rng)


def discriminator_update(
    policy: GanPolicy, real_batch: RelabeledBatch, weights, rng: RngStream
) -> float:
    return policy.discriminator_update(real_batch, weights, rng)


def generator_update(policy: GanPolicy, state_goal_batch, rng: RngStream) -> float:
    states, goals = state_goal_batch
    return policy.generator_update(states, goals, rng)
