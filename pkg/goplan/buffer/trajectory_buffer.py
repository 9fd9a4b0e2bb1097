from __future__ import annotations

import logging
from collections import deque
from typing import Iterator

import numpy as np

from goplan.buffer.relabeled_batch import InterPair, RelabeledBatch, Segment
from goplan.buffer.trajectory import Trajectory
from goplan.env.environments import make_env
from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError, EmptyBufferError
from goplan.numerics.rng_stream import RngStream


class _FlatIndex:
    """Concatenated views over the stored trajectories, rebuilt after inserts."""

    def __init__(self, trajectories: list[Trajectory], spec: EnvSpec) -> None:
        self.lengths = np.array([t.length for t in trajectories], dtype=np.int64)
        self.state_counts = self.lengths + 1
        self.state_offsets = np.concatenate([[0], np.cumsum(self.state_counts)[:-1]])
        self.states = (
            np.concatenate([t.states for t in trajectories])
            if trajectories
            else np.zeros((0, spec.state_dim))
        )
        action_rows = [t.actions for t in trajectories if t.length]
        self.actions = (
            np.concatenate(action_rows) if action_rows else np.zeros((0, spec.action_dim))
        )
        self.goals = (
            np.stack([t.goal for t in trajectories])
            if trajectories
            else np.zeros((0, spec.goal_dim))
        )
        self.transition_trajectory = np.repeat(
            np.arange(len(trajectories)), self.lengths
        )
        transition_offsets = np.concatenate([[0], np.cumsum(self.lengths)[:-1]])
        self.transition_step = np.arange(int(self.lengths.sum())) - np.repeat(
            transition_offsets.astype(np.int64), self.lengths
        )
        self.state_trajectory = np.repeat(np.arange(len(trajectories)), self.state_counts)


class TrajectoryBuffer:
    """Trajectory store with hindsight relabeling.

    ``capacity_transitions=None`` means unbounded; otherwise the oldest
    trajectories are evicted first once the transition count exceeds the
    cap. Sampling only reads, insertion is single-writer.
    """

    def __init__(
        self,
        spec: EnvSpec,
        capacity_transitions: int | None = None,
        name: str = "offline",
    ) -> None:
        self._log = logging.getLogger(f"goplan.buffer.TrajectoryBuffer.{name}")
        if capacity_transitions is not None and capacity_transitions < 1:
            raise ConfigurationError(f"{name}: capacity must be >= 1 transition")
        self.spec = spec
        self.name = name
        self.capacity_transitions = capacity_transitions
        self._trajectories: deque[Trajectory] = deque()
        self._n_transitions = 0
        self._index: _FlatIndex | None = None
        self._env = make_env(spec)

    def __len__(self):
        return len(self._trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self._trajectories)

    @property
    def n_transitions(self) -> int:
        return self._n_transitions

    @property
    def n_states(self) -> int:
        return self._n_transitions + len(self._trajectories)

    def get(self, index: int) -> Trajectory:
        return self._trajectories[index]

    def insert(self, trajectory: Trajectory):
        trajectory.validate(self.spec)
        self._trajectories.append(trajectory)
        self._n_transitions += trajectory.length
        self._evict()
        self._index = None

    def extend(self, trajectories):
        for trajectory in trajectories:
            self.insert(trajectory)

    def _evict(self):
        if self.capacity_transitions is None:
            return
        evicted = 0
        while self._n_transitions > self.capacity_transitions and len(self._trajectories) > 1:
            oldest = self._trajectories.popleft()
            self._n_transitions -= oldest.length
            evicted += 1
        if evicted:
            self._log.debug(f"evicted {evicted} oldest trajectories")

    def _flat(self) -> _FlatIndex:
        if self._index is None:
            self._index = _FlatIndex(list(self._trajectories), self.spec)
        return self._index

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(s, a, s')`` rows of every stored transition."""
        flat = self._flat()
        state_rows = flat.state_offsets[flat.transition_trajectory] + flat.transition_step
        return flat.states[state_rows], flat.actions, flat.states[state_rows + 1]

    def sample_relabeled(
        self, batch: int, future_ratio: float, rng: RngStream
    ) -> RelabeledBatch:
        if not 0.0 <= future_ratio <= 1.0:
            raise ConfigurationError(f"future ratio must lie in [0, 1], got {future_ratio}")
        if self._n_transitions == 0:
            raise EmptyBufferError(f"{self.name}: no transitions to sample")

        flat = self._flat()
        generator = rng.next_generator()
        picks = generator.integers(0, self._n_transitions, batch)
        relabeled = generator.random(batch) < future_ratio
        future_draw = generator.random(batch)

        trajectory = flat.transition_trajectory[picks]
        step = flat.transition_step[picks]
        offsets = flat.state_offsets[trajectory]
        lengths = flat.lengths[trajectory]

        # future index k uniform over t+1..L
        future = step + 1 + np.floor(future_draw * (lengths - step)).astype(np.int64)
        future = np.minimum(future, lengths)

        states = flat.states[offsets + step]
        next_states = flat.states[offsets + step + 1]
        goals = flat.goals[trajectory].copy()
        goals[relabeled] = self._env.phi(flat.states[offsets + future][relabeled])
        rewards = self._env.reward(next_states, goals)
        return RelabeledBatch(
            states=states,
            actions=flat.actions[picks],
            goals=goals,
            rewards=rewards,
            next_states=next_states,
            dones=rewards == 1.0,
            relabeled=relabeled,
        )

    def sample_intra_segment(self, K: int, rng: RngStream) -> Segment:
        if K < 0:
            raise ConfigurationError(f"segment length must be >= 0, got {K}")
        flat = self._flat()
        valid_starts = np.maximum(flat.lengths - K + 1, 0)
        total = int(valid_starts.sum())
        if total == 0:
            raise EmptyBufferError(f"{self.name}: no trajectory has {K} transitions")

        pick = int(rng.integers(total))
        cumulative = np.cumsum(valid_starts)
        trajectory_index = int(np.searchsorted(cumulative, pick, side="right"))
        start = pick - int(cumulative[trajectory_index] - valid_starts[trajectory_index])
        source = self._trajectories[trajectory_index]
        return Segment(
            states=source.states[start : start + K + 1].copy(),
            actions=source.actions[start : start + K].copy(),
            goal=source.goal.copy(),
            trajectory_index=trajectory_index,
            start=start,
        )

    def sample_inter_pair(self, rng: RngStream) -> InterPair:
        if len(self._trajectories) < 2:
            raise EmptyBufferError(
                f"{self.name}: inter-trajectory pairs need >= 2 trajectories"
            )
        flat = self._flat()
        generator = rng.next_generator()
        n_states = len(flat.states)

        first = int(generator.integers(0, n_states))
        first_trajectory = int(flat.state_trajectory[first])
        own = int(flat.state_counts[first_trajectory])
        second = int(generator.integers(0, n_states - own))
        # skip over the first trajectory's block
        if second >= flat.state_offsets[first_trajectory]:
            second += own
        return InterPair(
            start_state=flat.states[first].copy(),
            goal_state=flat.states[second].copy(),
            start_trajectory=first_trajectory,
            goal_trajectory=int(flat.state_trajectory[second]),
        )
