from __future__ import annotations

import numpy as np

from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.env.environments import make_env
from goplan.env.env_spec import EnvSpec


class OracleEnsemble(ADynamicsModel):
    """``n_members`` identical copies of the true environment step."""

    def __init__(self, spec: EnvSpec, n_members: int = 1, threshold: float | None = None):
        self.spec = spec
        self._n_members = n_members
        self._env = make_env(spec)
        self.threshold = threshold

    @property
    def n_members(self) -> int:
        return self._n_members

    def _predict_rows(self, index: int, states: np.ndarray, actions: np.ndarray):
        return np.atleast_2d(self._env.step(states, actions))
