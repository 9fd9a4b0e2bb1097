from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from goplan.env.env_spec import EnvSpec
from goplan.numerics.rng_stream import RngStream

RegionPredicate = Callable[[np.ndarray], np.ndarray]


class AGoalEnv:
    """Vectorized goal-conditioned environment.

    States, actions and goals are float64 arrays; every method accepts a
    single row or a ``(n, dim)`` batch and answers in the same shape.
    """

    def __init__(self, spec: EnvSpec) -> None:
        self._log = logging.getLogger(f"goplan.env.{self.__class__.__name__}")
        self.spec = spec

    def phi(self, states) -> np.ndarray:
        raise NotImplementedError

    def step(self, states, actions) -> np.ndarray:
        raise NotImplementedError

    def sample_states(
        self, rng: RngStream, n: int, region: RegionPredicate | None = None
    ) -> np.ndarray:
        raise NotImplementedError

    def is_valid_state(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        return np.all(np.isfinite(states), axis=-1)

    def sample_goals(
        self, rng: RngStream, n: int, region: RegionPredicate | None = None
    ) -> np.ndarray:
        return self.phi(self.sample_states(rng, n, region))

    def clamp_action(self, actions) -> np.ndarray:
        bound = self.spec.action_bound
        return np.clip(np.asarray(actions, dtype=np.float64), -bound, bound)

    def goal_distance(self, states, goals) -> np.ndarray:
        diff = self.phi(states) - np.asarray(goals, dtype=np.float64)
        return np.linalg.norm(diff, axis=-1)

    def achieved(self, next_states, goals) -> np.ndarray:
        # boundary inclusive
        return self.goal_distance(next_states, goals) <= self.spec.success_radius

    def reward(self, next_states, goals) -> np.ndarray:
        return self.achieved(next_states, goals).astype(np.float64)

    def _sample_with_region(
        self,
        draw: Callable[[np.random.Generator, int], np.ndarray],
        rng: RngStream,
        n: int,
        region: RegionPredicate | None,
    ) -> np.ndarray:
        generator = rng.next_generator()
        if region is None:
            return draw(generator, n)

        accepted: list[np.ndarray] = []
        count = 0
        for _ in range(1000):
            batch = draw(generator, max(n, 16))
            batch = batch[region(self.phi(batch))]
            accepted.append(batch)
            count += len(batch)
            if count >= n:
                return np.concatenate(accepted)[:n]
        raise RuntimeError(f"{self.spec.name}: region predicate rejects almost everything")

    def __str__(self):
        return f"{self.__class__.__name__}({self.spec.name})"
