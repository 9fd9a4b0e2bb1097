from __future__ import annotations

import numpy as np

from goplan.env.a_goal_env import AGoalEnv, RegionPredicate
from goplan.numerics.rng_stream import RngStream

LINE_LOW = -1.0
LINE_HIGH = 1.0


class LineBanditEnv(AGoalEnv):
    """Single-step bandit on the line segment [-1, 1].

    The state never moves and the goal is the state itself. What matters
    is which action mode an action lands in, see ``bandit_reward``.
    """

    def phi(self, states) -> np.ndarray:
        return np.asarray(states, dtype=np.float64).copy()

    def step(self, states, actions) -> np.ndarray:
        return np.asarray(states, dtype=np.float64).copy()

    def sample_states(
        self, rng: RngStream, n: int, region: RegionPredicate | None = None
    ) -> np.ndarray:
        def draw(generator: np.random.Generator, count: int):
            return generator.uniform(LINE_LOW, LINE_HIGH, (count, 1))

        return self._sample_with_region(draw, rng, n, region)

    def mode_index(self, actions) -> np.ndarray:
        """Index of the mode each action falls in, -1 when it is in none."""
        actions = np.asarray(actions, dtype=np.float64)[..., 0]
        centers = np.array([mode.center for mode in self.spec.bandit_modes])
        distance = np.abs(actions[..., None] - centers)
        nearest = np.argmin(distance, axis=-1)
        inside = np.take_along_axis(distance, nearest[..., None], axis=-1)[..., 0]
        return np.where(inside <= self.spec.mode_radius, nearest, -1)

    def bandit_reward(self, states, actions) -> np.ndarray:
        rewards = np.array([mode.reward for mode in self.spec.bandit_modes] + [0.0])
        return rewards[self.mode_index(actions)]
