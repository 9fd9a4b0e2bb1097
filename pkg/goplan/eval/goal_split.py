from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IN_IN = "in-in"
IN_OUT = "in-out"
OUT_IN = "out-in"
OUT_OUT = "out-out"
REGIMES = (IN_IN, IN_OUT, OUT_IN, OUT_OUT)


@dataclass(frozen=True)
class GoalSplit:
    """Train region ``x < boundary`` over the first goal coordinate.

    ``boundary=None`` is the degenerate split whose train region is the
    whole space; every regime then samples without restriction.
    """

    boundary: float | None = 0.5

    def in_train(self, goals) -> np.ndarray:
        goals = np.asarray(goals, dtype=np.float64)
        if self.boundary is None:
            return np.ones(goals.shape[:-1], dtype=bool)
        return goals[..., 0] < self.boundary

    def out_of_train(self, goals) -> np.ndarray:
        if self.boundary is None:
            return np.ones(np.asarray(goals).shape[:-1], dtype=bool)
        return ~self.in_train(goals)

    def regions(self, regime: str):
        """(start predicate, goal predicate) for one of ``REGIMES``."""
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}, expected one of {REGIMES}")
        if self.boundary is None:
            return None, None
        start, goal = regime.split("-")
        pick = {"in": self.in_train, "out": self.out_of_train}
        return pick[start], pick[goal]
