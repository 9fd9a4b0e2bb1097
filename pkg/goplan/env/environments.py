from __future__ import annotations

from functools import lru_cache

import numpy as np

from goplan.env.a_goal_env import AGoalEnv
from goplan.env.env_spec import LINE_BANDIT, TWO_CORRIDOR_REACH, EnvSpec
from goplan.env.line_bandit import LineBanditEnv
from goplan.env.two_corridor_reach import TwoCorridorReachEnv

_ENV_CLASSES: dict[str, type[AGoalEnv]] = {
    TWO_CORRIDOR_REACH: TwoCorridorReachEnv,
    LINE_BANDIT: LineBanditEnv,
}


@lru_cache(maxsize=None)
def make_env(spec: EnvSpec) -> AGoalEnv:
    return _ENV_CLASSES[spec.name](spec)


def phi(spec: EnvSpec, state) -> np.ndarray:
    return make_env(spec).phi(state)


def step(spec: EnvSpec, state, action) -> np.ndarray:
    return make_env(spec).step(state, action)


def reward(spec: EnvSpec, next_state, goal):
    result = make_env(spec).reward(next_state, goal)
    return float(result) if np.ndim(result) == 0 else result


def bandit_reward(spec: EnvSpec, state, action):
    env = make_env(spec)
    if not isinstance(env, LineBanditEnv):
        raise TypeError(f"bandit_reward is only defined for {LINE_BANDIT}")
    result = env.bandit_reward(state, action)
    return float(result) if np.ndim(result) == 0 else result
