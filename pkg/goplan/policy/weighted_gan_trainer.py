from __future__ import annotations

import logging
from typing import Callable, Iterable

from goplan.buffer.relabeled_batch import RelabeledBatch
from goplan.critic.value_function import ValueFunction
from goplan.numerics.rng_stream import RngStream
from goplan.policy.gan_policy import GanPolicy

VALUE = "value"
DISCRIMINATOR = "discriminator"
GENERATOR = "generator"
COMPONENTS = (VALUE, DISCRIMINATOR, GENERATOR)

BatchSource = Callable[[RngStream], RelabeledBatch]
LossRecorder = Callable[[int, str, float], None]


class WeightedGanTrainer:
    """Interleaves the TD, discriminator and generator updates on shared batches.

    Weights for the discriminator's real term come from the critic as it
    stands after that batch's TD step.
    """

    def __init__(self, critic: ValueFunction, policy: GanPolicy) -> None:
        self._log = logging.getLogger("goplan.policy.WeightedGanTrainer")
        self.critic = critic
        self.policy = policy

    def step(
        self,
        batch: RelabeledBatch,
        rng: RngStream,
        components: Iterable[str] = COMPONENTS,
    ) -> dict[str, float]:
        components = tuple(components)
        losses = {}
        if VALUE in components:
            losses[VALUE] = self.critic.td_update(batch)
        if DISCRIMINATOR in components:
            weights = self.critic.weights(batch)
            losses[DISCRIMINATOR] = self.policy.discriminator_update(batch, weights, rng)
        if GENERATOR in components:
            losses[GENERATOR] = self.policy.generator_update(batch.states, batch.goals, rng)
        return losses

    def run(
        self,
        n_steps: int,
        sample_batch: BatchSource,
        rng: RngStream,
        record: LossRecorder | None = None,
        components: Iterable[str] = COMPONENTS,
    ) -> dict[str, float]:
        last: dict[str, float] = {}
        for step in range(n_steps):
            stream = rng.split(step)
            last = self.step(sample_batch(stream), stream, components)
            if record is not None:
                for component, loss in last.items():
                    record(step, component, loss)
            if step % 100 == 0:
                self._log.debug(f"step {step}: {last}")
        return last
