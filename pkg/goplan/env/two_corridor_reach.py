from __future__ import annotations

import numpy as np

from goplan.env.a_goal_env import AGoalEnv, RegionPredicate
from goplan.numerics.rng_stream import RngStream

ARENA_LOW = 0.0
ARENA_HIGH = 1.0
WALL_Y = 0.5
WALL_X_MIN = 0.25
WALL_X_MAX = 0.75


def crosses_wall(start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """True where the straight move start -> end touches the wall segment."""
    start_dy = start[:, 1] - WALL_Y
    end_dy = end[:, 1] - WALL_Y
    transverse = (start_dy * end_dy < 0) | ((end_dy == 0) & (start_dy != 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(transverse, start_dy / (start_dy - end_dy), 0.0)
    cross_x = start[:, 0] + t * (end[:, 0] - start[:, 0])
    transverse &= (cross_x >= WALL_X_MIN) & (cross_x <= WALL_X_MAX)

    along = (start_dy == 0) & (end_dy == 0)
    low = np.minimum(start[:, 0], end[:, 0])
    high = np.maximum(start[:, 0], end[:, 0])
    along &= (high >= WALL_X_MIN) & (low <= WALL_X_MAX)
    return transverse | along


def inside_wall(positions: np.ndarray) -> np.ndarray:
    return (
        (positions[..., 1] == WALL_Y)
        & (positions[..., 0] >= WALL_X_MIN)
        & (positions[..., 0] <= WALL_X_MAX)
    )


class TwoCorridorReachEnv(AGoalEnv):
    """Point mass in the unit square split by a horizontal wall.

    State is ``(x, y, vx, vy)``; the velocity is the displacement of the
    last step divided by ``dt``. A move that would touch the wall keeps its
    tangential (x) component and loses its normal (y) component.
    """

    def phi(self, states) -> np.ndarray:
        return np.asarray(states, dtype=np.float64)[..., :2].copy()

    def step(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        squeeze = states.ndim == 1
        states = np.atleast_2d(states)
        actions = np.atleast_2d(self.clamp_action(actions))

        position = states[:, :2]
        target = position + actions * self.spec.dt

        blocked = crosses_wall(position, target)
        target[blocked, 1] = position[blocked, 1]
        still_blocked = crosses_wall(position, target)
        target[still_blocked] = position[still_blocked]
        target = np.clip(target, ARENA_LOW, ARENA_HIGH)

        velocity = (target - position) / self.spec.dt
        next_states = np.concatenate([target, velocity], axis=1)
        return next_states[0] if squeeze else next_states

    def is_valid_state(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        position = states[..., :2]
        in_arena = np.all((position >= ARENA_LOW) & (position <= ARENA_HIGH), axis=-1)
        return super().is_valid_state(states) & in_arena & ~inside_wall(position)

    def sample_states(
        self, rng: RngStream, n: int, region: RegionPredicate | None = None
    ) -> np.ndarray:
        def draw(generator: np.random.Generator, count: int):
            position = generator.uniform(ARENA_LOW, ARENA_HIGH, (count, 2))
            position = position[~inside_wall(position)]
            return np.concatenate([position, np.zeros_like(position)], axis=1)

        return self._sample_with_region(draw, rng, n, region)
