from __future__ import annotations

import logging
from collections import Counter

import numpy as np

from goplan.buffer.trajectory import Trajectory
from goplan.env.a_goal_env import RegionPredicate
from goplan.env.environments import make_env
from goplan.env.env_spec import LINE_BANDIT, EnvSpec
from goplan.env.scripted_controller import (
    BanditBehaviorPolicy,
    ScriptedController,
    check_behavior_params,
)
from goplan.errors import ConfigurationError
from goplan.numerics.rng_stream import RngStream


class DatasetGenerator:
    """Rolls the scripted behavior policy until ``n_transitions`` are collected.

    Every episode runs for the full horizon except the last, which is cut so
    the transition count comes out exact. Episode ``i`` draws from
    ``RngStream(seed).split(i)``.
    """

    def __init__(
        self,
        spec: EnvSpec,
        n_transitions: int,
        noise_std: float,
        random_action_prob: float,
        seed: int,
        start_region: RegionPredicate | None = None,
        goal_region: RegionPredicate | None = None,
    ) -> None:
        self._log = logging.getLogger("goplan.env.DatasetGenerator")
        check_behavior_params(noise_std, random_action_prob)
        if n_transitions < spec.horizon:
            raise ConfigurationError(
                f"need at least one horizon of transitions ({spec.horizon}), "
                f"got {n_transitions}"
            )
        self.spec = spec
        self.n_transitions = int(n_transitions)
        self.noise_std = noise_std
        self.random_action_prob = random_action_prob
        self.seed = seed
        self.start_region = start_region
        self.goal_region = goal_region
        self.route_counts: Counter = Counter()
        self._env = make_env(spec)

    def generate(self) -> list[Trajectory]:
        if self.spec.name == LINE_BANDIT:
            trajectories = self._bandit_dataset()
        else:
            trajectories = self._corridor_dataset()
        self._log.info(
            f"generated {len(trajectories)} {self.spec.name} trajectories "
            f"({self.n_transitions} transitions, seed {self.seed})"
        )
        return trajectories

    def _corridor_dataset(self) -> list[Trajectory]:
        controller = ScriptedController(
            self.spec, self.noise_std, self.random_action_prob
        )
        root = RngStream(self.seed)
        trajectories = []
        remaining = self.n_transitions
        episode = 0
        while remaining > 0:
            length = min(self.spec.horizon, remaining)
            trajectories.append(self._corridor_episode(controller, root.split(episode), length))
            remaining -= length
            episode += 1
        return trajectories

    def _corridor_episode(
        self, controller: ScriptedController, stream: RngStream, length: int
    ) -> Trajectory:
        state = self._env.sample_states(stream, 1, self.start_region)[0]
        goal = self._env.sample_goals(stream, 1, self.goal_region)[0]
        self.route_counts[controller.begin_episode(stream)] += 1

        states = [state]
        actions = []
        for _ in range(length):
            action = controller.act(state, goal, stream)
            state = self._env.step(state, action)
            actions.append(action)
            states.append(state)
        return Trajectory(np.array(states), np.array(actions), goal)

    def _bandit_dataset(self) -> list[Trajectory]:
        behavior = BanditBehaviorPolicy(
            self.spec, self.noise_std, self.random_action_prob
        )
        root = RngStream(self.seed)
        states = self._env.sample_states(root, self.n_transitions, self.start_region)
        goals = self._env.phi(states)
        actions = behavior.sample_actions(states, goals, root)
        return [
            Trajectory(np.stack([state, state]), action[None, :], goal)
            for state, action, goal in zip(states, actions, goals)
        ]


def generate_dataset(
    spec: EnvSpec,
    n_transitions: int,
    noise_std: float,
    random_action_prob: float,
    seed: int,
    start_region: RegionPredicate | None = None,
    goal_region: RegionPredicate | None = None,
) -> list[Trajectory]:
    return DatasetGenerator(
        spec,
        n_transitions,
        noise_std,
        random_action_prob,
        seed,
        start_region=start_region,
        goal_region=goal_region,
    ).generate()
