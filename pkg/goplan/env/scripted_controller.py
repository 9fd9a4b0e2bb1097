from __future__ import annotations

import logging
from enum import Enum

import numpy as np

from goplan.env.environments import make_env
from goplan.env.env_spec import EnvSpec, TWO_CORRIDOR_REACH
from goplan.env.two_corridor_reach import WALL_X_MAX, WALL_X_MIN, WALL_Y
from goplan.errors import ConfigurationError
from goplan.numerics.rng_stream import RngStream


class Route(str, Enum):
    WEST = "west"
    EAST = "east"


def check_behavior_params(noise_std: float, random_action_prob: float):
    if not 0.0 <= random_action_prob <= 1.0:
        raise ConfigurationError(
            f"random action probability must lie in [0, 1], got {random_action_prob}"
        )
    if not noise_std >= 0.0:
        raise ConfigurationError(f"noise std must be >= 0, got {noise_std}")


class ScriptedController:
    """Saturated proportional-to-goal controller for two_corridor_reach.

    When the wall lies between the agent and its goal, the controller heads
    for the gap on its committed side first. The route is drawn once per
    episode by ``begin_episode``; ``sample_actions`` (used when it stands in
    as an evaluation oracle) takes the shorter side instead.
    """

    def __init__(
        self,
        spec: EnvSpec,
        noise_std: float = 0.0,
        random_action_prob: float = 0.0,
        gap_margin: float = 0.08,
        wall_margin: float = 0.03,
    ) -> None:
        if spec.name != TWO_CORRIDOR_REACH:
            raise ConfigurationError(f"ScriptedController drives {TWO_CORRIDOR_REACH} only")
        check_behavior_params(noise_std, random_action_prob)
        self._log = logging.getLogger("goplan.env.ScriptedController")
        self.spec = spec
        self.noise_std = noise_std
        self.random_action_prob = random_action_prob
        self.gap_margin = gap_margin
        self.wall_margin = wall_margin
        self.route: Route | None = None
        self._env = make_env(spec)

    def begin_episode(self, rng: RngStream) -> Route:
        self.route = Route.WEST if rng.random() < 0.5 else Route.EAST
        return self.route

    def _gap_x(self, route: Route) -> float:
        if route == Route.WEST:
            return WALL_X_MIN - self.gap_margin
        return WALL_X_MAX + self.gap_margin

    def wall_between(self, positions: np.ndarray, goals: np.ndarray) -> np.ndarray:
        start_dy = positions[:, 1] - WALL_Y
        goal_dy = goals[:, 1] - WALL_Y
        opposite = start_dy * goal_dy < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(opposite, start_dy / (start_dy - goal_dy), 0.0)
        cross_x = positions[:, 0] + t * (goals[:, 0] - positions[:, 0])
        return (
            opposite
            & (cross_x >= WALL_X_MIN - self.wall_margin)
            & (cross_x <= WALL_X_MAX + self.wall_margin)
        )

    def shortest_routes(self, positions: np.ndarray, goals: np.ndarray) -> list[Route]:
        routes = []
        for position, goal in zip(positions, goals):
            west = abs(position[0] - self._gap_x(Route.WEST)) + abs(
                goal[0] - self._gap_x(Route.WEST)
            )
            east = abs(position[0] - self._gap_x(Route.EAST)) + abs(
                goal[0] - self._gap_x(Route.EAST)
            )
            routes.append(Route.WEST if west <= east else Route.EAST)
        return routes

    def nominal_actions(self, states, goals, routes: list[Route]) -> np.ndarray:
        positions = self._env.phi(np.atleast_2d(states))
        goals = np.atleast_2d(np.asarray(goals, dtype=np.float64))
        targets = goals.copy()
        blocked = self.wall_between(positions, goals)
        for row in np.flatnonzero(blocked):
            targets[row] = (self._gap_x(routes[row]), WALL_Y)

        delta = targets - positions
        largest = np.max(np.abs(delta), axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(
                largest > 0, np.minimum(1.0, self.spec.action_bound / largest), 0.0
            )
        return delta * scale

    def perturb(self, actions: np.ndarray, rng: RngStream) -> np.ndarray:
        bound = self.spec.action_bound
        generator = rng.next_generator()
        noise = generator.standard_normal(actions.shape)
        random_actions = generator.uniform(-bound, bound, actions.shape)
        replace = generator.random(len(actions)) < self.random_action_prob
        perturbed = np.clip(actions + bound * self.noise_std * noise, -bound, bound)
        perturbed[replace] = random_actions[replace]
        return perturbed

    def act(self, state, goal, rng: RngStream) -> np.ndarray:
        state = np.atleast_2d(state)
        goal = np.atleast_2d(goal)
        routes = [self.route] if self.route is not None else self.shortest_routes(
            self._env.phi(state), goal
        )
        return self.perturb(self.nominal_actions(state, goal, routes), rng)[0]

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray:
        states = np.atleast_2d(states)
        goals = np.atleast_2d(goals)
        routes = self.shortest_routes(self._env.phi(states), goals)
        return self.perturb(self.nominal_actions(states, goals, routes), rng)


class BanditBehaviorPolicy:
    """Mixture over the line_bandit action modes, weighted by mode frequency."""

    def __init__(
        self, spec: EnvSpec, noise_std: float = 0.05, random_action_prob: float = 0.0
    ) -> None:
        check_behavior_params(noise_std, random_action_prob)
        self.spec = spec
        self.noise_std = noise_std
        self.random_action_prob = random_action_prob
        self.centers = np.array([mode.center for mode in spec.bandit_modes])
        self.frequencies = np.array([mode.frequency for mode in spec.bandit_modes])

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray:
        n = len(np.atleast_2d(states))
        bound = self.spec.action_bound
        generator = rng.next_generator()
        modes = generator.choice(len(self.centers), size=n, p=self.frequencies)
        actions = self.centers[modes] + self.noise_std * generator.standard_normal(n)
        random_actions = generator.uniform(-bound, bound, n)
        replace = generator.random(n) < self.random_action_prob
        actions[replace] = random_actions[replace]
        return np.clip(actions, -bound, bound)[:, None]


class UniformRandomPolicy:
    def __init__(self, spec: EnvSpec) -> None:
        self.spec = spec

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray:
        n = len(np.atleast_2d(states))
        bound = self.spec.action_bound
        return rng.uniform(-bound, bound, (n, self.spec.action_dim))
