from __future__ import annotations

import numpy as np

from goplan.errors import ConfigurationError, UsageError


class ADynamicsModel:
    """Ensemble interface shared by learned and ground-truth dynamics."""

    threshold: float | None = None

    @property
    def n_members(self) -> int:
        raise NotImplementedError

    def _predict_rows(self, index: int, states: np.ndarray, actions: np.ndarray):
        raise NotImplementedError

    def _check_index(self, index: int):
        if not 0 <= index < self.n_members:
            raise UsageError(
                f"member index {index} out of range for {self.n_members} members"
            )

    def predict(self, index: int, states, actions) -> np.ndarray:
        self._check_index(index)
        states = np.asarray(states, dtype=np.float64)
        squeeze = states.ndim == 1
        out = self._predict_rows(
            index, np.atleast_2d(states), np.atleast_2d(np.asarray(actions, dtype=np.float64))
        )
        return out[0] if squeeze else out

    def predict_all(self, states, actions) -> np.ndarray:
        """Shape ``(n_members, n, state_dim)``."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        return np.stack(
            [self._predict_rows(i, states, actions) for i in range(self.n_members)]
        )

    def predict_members(self, member_indices, states, actions) -> np.ndarray:
        """Row ``j`` advanced by member ``member_indices[j]``."""
        member_indices = np.asarray(member_indices, dtype=np.int64)
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        out = np.empty_like(states)
        for index in np.unique(member_indices):
            self._check_index(int(index))
            rows = member_indices == index
            out[rows] = self._predict_rows(int(index), states[rows], actions[rows])
        return out

    def step_uncertainty(self, states, actions):
        """Mean squared deviation of member predictions from their mean."""
        single = np.asarray(states).ndim == 1
        predictions = self.predict_all(states, actions)
        deviation = predictions - predictions.mean(axis=0, keepdims=True)
        uncertainty = np.mean(np.sum(deviation * deviation, axis=2), axis=0)
        return float(uncertainty[0]) if single else uncertainty

    def trajectory_uncertainty(self, states, actions) -> float:
        """Max over steps, evaluated one row at a time like imagined rollouts are."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if actions.size == 0 or len(actions) == 0:
            raise ConfigurationError("trajectory uncertainty of an empty trajectory")
        if len(states) not in (len(actions), len(actions) + 1):
            raise ConfigurationError(
                f"{len(states)} states do not match {len(actions)} actions"
            )
        return max(
            self.step_uncertainty(states[t], actions[t]) for t in range(len(actions))
        )
