from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from goplan.errors import MalformedTrajectoryError

if TYPE_CHECKING:
    from goplan.env.env_spec import EnvSpec


@dataclass(eq=False)
class Trajectory:
    """States ``s_0..s_L``, actions ``a_0..a_{L-1}`` and the desired goal."""

    states: np.ndarray
    actions: np.ndarray
    goal: np.ndarray
    tag: str | None = None
    source: tuple[int, int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.actions.ndim == 1:
            width = 1 if self.actions.size else 0
            self.actions = self.actions.reshape(len(self.actions), width)
        self.goal = np.atleast_1d(np.asarray(self.goal, dtype=np.float64))

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def validate(self, spec: EnvSpec | None = None) -> "Trajectory":
        if self.states.ndim != 2 or self.actions.ndim != 2 or self.goal.ndim != 1:
            raise MalformedTrajectoryError("trajectory arrays have the wrong rank")
        if len(self.states) != len(self.actions) + 1:
            raise MalformedTrajectoryError(
                f"{len(self.states)} states do not match {len(self.actions)} actions"
            )
        if len(self.actions) and not np.all(np.isfinite(self.actions)):
            raise MalformedTrajectoryError("trajectory actions are not finite")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.goal))):
            raise MalformedTrajectoryError("trajectory states or goal are not finite")
        if spec is not None:
            expected = (spec.state_dim, spec.action_dim, spec.goal_dim)
            found = (self.states.shape[1], self.actions.shape[1], self.goal.shape[0])
            if self.length == 0:
                expected, found = expected[::2], found[::2]
            if expected != found:
                raise MalformedTrajectoryError(
                    f"{spec.name}: trajectory dims {found} != {expected}"
                )
        return self

    def same_as(self, other: "Trajectory") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.goal, other.goal)
            and self.tag == other.tag
        )

    def to_dict(self, env_name: str, version: int) -> dict:
        record = {
            "env": env_name,
            "version": version,
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "goal": self.goal.tolist(),
        }
        if self.tag is not None:
            record["tag"] = self.tag
        return record

    @classmethod
    def from_dict(cls, record: dict, action_dim: int) -> "Trajectory":
        actions = np.asarray(record["actions"], dtype=np.float64).reshape(-1, action_dim)
        return cls(record["states"], actions, record["goal"], record.get("tag"))
