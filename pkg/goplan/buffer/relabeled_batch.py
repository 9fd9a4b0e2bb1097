from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RelabeledSample:
    s: np.ndarray
    a: np.ndarray
    g: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class RelabeledBatch:
    states: np.ndarray
    actions: np.ndarray
    goals: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    relabeled: np.ndarray

    def __len__(self):
        return len(self.states)

    def __getitem__(self, index: int) -> RelabeledSample:
        return RelabeledSample(
            self.states[index],
            self.actions[index],
            self.goals[index],
            float(self.rewards[index]),
            self.next_states[index],
            bool(self.dones[index]),
        )

    @classmethod
    def concatenate(cls, batches: list["RelabeledBatch"]) -> "RelabeledBatch":
        return cls(
            *(
                np.concatenate([getattr(batch, name) for batch in batches])
                for name in (
                    "states",
                    "actions",
                    "goals",
                    "rewards",
                    "next_states",
                    "dones",
                    "relabeled",
                )
            )
        )


@dataclass
class Segment:
    states: np.ndarray
    actions: np.ndarray
    goal: np.ndarray
    trajectory_index: int
    start: int

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class InterPair:
    start_state: np.ndarray
    goal_state: np.ndarray
    start_trajectory: int
    goal_trajectory: int
