from __future__ import annotations

from collections import Counter
from enum import Enum

from goplan.buffer.trajectory import Trajectory
from goplan.buffer.trajectory_buffer import TrajectoryBuffer
from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.env.env_spec import EnvSpec
from goplan.errors import MalformedTrajectoryError

DEFAULT_CAPACITY_TRANSITIONS = 50_000


class Provenance(str, Enum):
    INTRA_IMPROVED = "intra_improved"
    INTRA_ORIGINAL = "intra_original"
    INTER_REACHED = "inter_reached"
    INTER_FRONTIER = "inter_frontier"


IMAGINED = frozenset(
    {Provenance.INTRA_IMPROVED, Provenance.INTER_REACHED, Provenance.INTER_FRONTIER}
)


class ReanalysisBuffer(TrajectoryBuffer):
    def __init__(
        self, spec: EnvSpec, capacity_transitions: int = DEFAULT_CAPACITY_TRANSITIONS
    ) -> None:
        super().__init__(spec, capacity_transitions, name="reanalysis")

    def insert(self, trajectory: Trajectory):
        try:
            Provenance(trajectory.tag)
        except ValueError:
            raise MalformedTrajectoryError(
                f"reanalysis trajectories need a provenance tag, got {trajectory.tag!r}"
            ) from None
        super().insert(trajectory)

    def tag_counts(self) -> dict[str, int]:
        counts = Counter(trajectory.tag for trajectory in self)
        return {tag.value: counts.get(tag.value, 0) for tag in Provenance}


def replay_uncertainty_check(
    buffer: TrajectoryBuffer, ensemble: ADynamicsModel, threshold: float
) -> list[int]:
    """Indices of imagined trajectories whose recomputed U(tau) exceeds ``threshold``."""
    imagined = {tag.value for tag in IMAGINED}
    violations = []
    for index, trajectory in enumerate(buffer):
        if trajectory.tag not in imagined or trajectory.length == 0:
            continue
        if ensemble.trajectory_uncertainty(trajectory.states, trajectory.actions) > threshold:
            violations.append(index)
    return violations
