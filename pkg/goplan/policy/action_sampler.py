from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from goplan.numerics.rng_stream import RngStream


@runtime_checkable
class ActionSampler(Protocol):
    """Anything that maps a batch of (state, goal) rows to action rows."""

    def sample_actions(self, states, goals, rng: RngStream) -> np.ndarray: ...
