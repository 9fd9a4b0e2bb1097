from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from goplan.buffer.relabeled_batch import RelabeledBatch
from goplan.buffer.trajectory import Trajectory
from goplan.buffer.trajectory_buffer import TrajectoryBuffer
from goplan.critic.value_function import ValueFunction
from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.env.environments import make_env
from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError, UsageError
from goplan.numerics.rng_stream import RngStream
from goplan.parallel import parallel_map
from goplan.planner.planner import Planner, PlannerConfig
from goplan.policy.gan_policy import GanPolicy
from goplan.policy.weighted_gan_trainer import (
    DISCRIMINATOR,
    GENERATOR,
    VALUE,
    WeightedGanTrainer,
)
from goplan.reanalysis.reanalysis_buffer import (
    DEFAULT_CAPACITY_TRANSITIONS,
    Provenance,
    ReanalysisBuffer,
)


class ReanalysisOutcome(str, Enum):
    INTRA_IMPROVED = "intra_improved"
    INTRA_NOT_REACHED = "intra_not_reached"
    INTRA_UNCERTAIN = "intra_uncertain"
    INTER_REACHED = "inter_reached"
    INTER_FRONTIER = "inter_frontier"
    INTER_UNCERTAIN = "inter_uncertain"


@dataclass
class GenerationResult:
    outcome: ReanalysisOutcome
    trajectory: Trajectory | None


@dataclass(frozen=True)
class FinetuneSchedule:
    iterations: int = 10
    intra_per_iteration: int = 200
    inter_per_iteration: int = 200
    value_steps: int = 500
    discriminator_steps: int = 500
    generator_steps: int = 500
    segment_length: int = 10
    batch_size: int = 256
    future_ratio: float = 0.8
    reanalysis_fraction: float = 0.5
    strict: bool = False
    policy_only: bool = False
    capacity_transitions: int = DEFAULT_CAPACITY_TRANSITIONS

    def __post_init__(self):
        counts = (
            self.iterations,
            self.intra_per_iteration,
            self.inter_per_iteration,
            self.value_steps,
            self.discriminator_steps,
            self.generator_steps,
            self.segment_length,
        )
        if min(counts) < 0:
            raise ConfigurationError("finetune schedule counts must be >= 0")
        if self.intra_per_iteration == 0 and self.inter_per_iteration == 0:
            raise ConfigurationError("schedule needs intra or inter generation")
        if not 0.0 <= self.reanalysis_fraction <= 1.0:
            raise ConfigurationError("reanalysis fraction must lie in [0, 1]")

    @classmethod
    def from_settings(cls, settings) -> "FinetuneSchedule":
        return cls(
            iterations=settings.get_int(["reanalysis.iterations"]),
            intra_per_iteration=settings.get_int(["reanalysis.intra_per_iteration"]),
            inter_per_iteration=settings.get_int(["reanalysis.inter_per_iteration"]),
            value_steps=settings.get_int(["reanalysis.value_steps"]),
            discriminator_steps=settings.get_int(["reanalysis.discriminator_steps"]),
            generator_steps=settings.get_int(["reanalysis.generator_steps"]),
            segment_length=settings.get_int(["reanalysis.segment_length"]),
            batch_size=settings.get_int(["train.batch_size"]),
            future_ratio=settings.get_float(["train.future_ratio"]),
            reanalysis_fraction=settings.get_float(["reanalysis.mix_fraction"]),
            strict=settings.get_boolean(["reanalysis.strict"]),
            policy_only=settings.get_boolean(["reanalysis.policy_only"]),
            capacity_transitions=settings.get_int(["reanalysis.capacity_transitions"]),
        )


@dataclass
class IterationMetrics:
    iteration: int
    outcomes: dict[str, int]
    buffer_trajectories: int
    buffer_transitions: int
    losses: dict[str, float] = field(default_factory=dict)
    skipped: bool = False

    def to_row(self) -> dict:
        row = {
            "iteration": self.iteration,
            "buffer_trajectories": self.buffer_trajectories,
            "buffer_transitions": self.buffer_transitions,
            "skipped": int(self.skipped),
        }
        for outcome in ReanalysisOutcome:
            row[outcome.value] = self.outcomes.get(outcome.value, 0)
        for name in (VALUE, DISCRIMINATOR, GENERATOR):
            row[f"{name}_loss"] = self.losses.get(name, float("nan"))
        return row


class Reanalyzer:
    """Imagined-trajectory generation and the finetuning loop.

    Generation only reads the offline buffer and the frozen models; the
    results go into ``reanalysis_buffer`` in task order.
    """

    def __init__(
        self,
        spec: EnvSpec,
        offline_buffer: TrajectoryBuffer,
        ensemble: ADynamicsModel,
        policy: GanPolicy,
        critic: ValueFunction | None,
        planner_config: PlannerConfig | None = None,
        schedule: FinetuneSchedule | None = None,
    ) -> None:
        self._log = logging.getLogger("goplan.reanalysis.Reanalyzer")
        self.spec = spec
        self.offline_buffer = offline_buffer
        self.ensemble = ensemble
        self.policy = policy
        self.critic = critic
        self.schedule = schedule or FinetuneSchedule()
        self.planner = Planner(spec, ensemble, policy, planner_config)
        self.reanalysis_buffer = ReanalysisBuffer(spec, self.schedule.capacity_transitions)
        self._env = make_env(spec)

    @property
    def threshold(self) -> float:
        if self.ensemble.threshold is None:
            raise UsageError("uncertainty threshold u is not calibrated")
        return self.ensemble.threshold

    def _choose_action(self, state, goal, rng: RngStream) -> np.ndarray:
        if self.schedule.policy_only:
            return self.policy.act(state, goal, rng)
        return self.planner.plan(state, goal, rng)

    def _imagine(self, state, action, rng: RngStream) -> np.ndarray:
        member = int(rng.integers(self.ensemble.n_members))
        return self.ensemble.predict(member, state, action)

    def intra_traj(self, rng: RngStream) -> GenerationResult:
        segment = self.offline_buffer.sample_intra_segment(
            self.schedule.segment_length, rng.split(0)
        )
        original = Trajectory(
            segment.states,
            segment.actions,
            segment.goal,
            tag=Provenance.INTRA_ORIGINAL.value,
        )
        target = self._env.phi(segment.states[-1])
        threshold = self.threshold

        state = segment.states[0]
        states, actions = [state], []
        for k in range(segment.length):
            stream = rng.split(1 + k)
            action = self._choose_action(state, target, stream.split(0))
            if self.ensemble.step_uncertainty(state, action) > threshold:
                return GenerationResult(ReanalysisOutcome.INTRA_UNCERTAIN, original)
            state = self._imagine(state, action, stream.split(1))
            states.append(state)
            actions.append(action)
            if self._env.achieved(state, target):
                imagined = Trajectory(
                    np.array(states),
                    np.array(actions),
                    target,
                    tag=Provenance.INTRA_IMPROVED.value,
                )
                return GenerationResult(ReanalysisOutcome.INTRA_IMPROVED, imagined)
        return GenerationResult(ReanalysisOutcome.INTRA_NOT_REACHED, original)

    def inter_traj(self, rng: RngStream) -> GenerationResult:
        pair = self.offline_buffer.sample_inter_pair(rng.split(0))
        target = self._env.phi(pair.goal_state)
        threshold = self.threshold

        state = pair.start_state
        states, actions = [state], []
        for k in range(self.spec.horizon):
            stream = rng.split(1 + k)
            action = self._choose_action(state, target, stream.split(0))
            if self.ensemble.step_uncertainty(state, action) > threshold:
                return GenerationResult(ReanalysisOutcome.INTER_UNCERTAIN, None)
            state = self._imagine(state, action, stream.split(1))
            states.append(state)
            actions.append(action)
            if self._env.achieved(state, target):
                reached = Trajectory(
                    np.array(states),
                    np.array(actions),
                    target,
                    tag=Provenance.INTER_REACHED.value,
                )
                return GenerationResult(ReanalysisOutcome.INTER_REACHED, reached)

        frontier = Trajectory(
            np.array(states),
            np.array(actions),
            self._env.phi(states[-1]),
            tag=Provenance.INTER_FRONTIER.value,
        )
        return GenerationResult(ReanalysisOutcome.INTER_FRONTIER, frontier)

    def generate(self, n_intra: int, n_inter: int, rng: RngStream) -> Counter:
        tasks = [("intra", i) for i in range(n_intra)] + [("inter", j) for j in range(n_inter)]

        def run_task(task):
            kind, index = task
            stream = rng.split(index if kind == "intra" else n_intra + index)
            return self.intra_traj(stream) if kind == "intra" else self.inter_traj(stream)

        outcomes: Counter = Counter()
        for result in parallel_map(run_task, tasks):
            outcomes[result.outcome.value] += 1
            if result.trajectory is not None:
                self.reanalysis_buffer.insert(result.trajectory)
        return outcomes

    def sample_finetune_batch(self, rng: RngStream) -> RelabeledBatch:
        schedule = self.schedule
        if schedule.strict:
            return self.reanalysis_buffer.sample_relabeled(
                schedule.batch_size, schedule.future_ratio, rng
            )
        n_reanalysis = int(round(schedule.batch_size * schedule.reanalysis_fraction))
        batches = []
        if n_reanalysis:
            batches.append(
                self.reanalysis_buffer.sample_relabeled(
                    n_reanalysis, schedule.future_ratio, rng
                )
            )
        if schedule.batch_size - n_reanalysis:
            batches.append(
                self.offline_buffer.sample_relabeled(
                    schedule.batch_size - n_reanalysis, schedule.future_ratio, rng
                )
            )
        return RelabeledBatch.concatenate(batches)

    def finetune_iteration(self, iteration: int, rng: RngStream) -> IterationMetrics:
        schedule = self.schedule
        outcomes = self.generate(
            schedule.intra_per_iteration, schedule.inter_per_iteration, rng.split(0)
        )
        metrics = IterationMetrics(
            iteration=iteration,
            outcomes=dict(outcomes),
            buffer_trajectories=len(self.reanalysis_buffer),
            buffer_transitions=self.reanalysis_buffer.n_transitions,
        )
        if self.reanalysis_buffer.n_transitions == 0:
            self._log.warning(
                f"iteration {iteration}: reanalysis buffer is empty, skipping finetuning"
            )
            metrics.skipped = True
            return metrics

        if self.critic is None:
            raise UsageError("finetuning needs a value function")
        trainer = WeightedGanTrainer(self.critic, self.policy)
        budget = {
            VALUE: schedule.value_steps,
            DISCRIMINATOR: schedule.discriminator_steps,
            GENERATOR: schedule.generator_steps,
        }
        totals: Counter = Counter()
        counts: Counter = Counter()
        train_rng = rng.split(1)
        for step in range(max(budget.values())):
            components = tuple(name for name, steps in budget.items() if step < steps)
            stream = train_rng.split(step)
            losses = trainer.step(self.sample_finetune_batch(stream), stream, components)
            totals.update(losses)
            counts.update(losses.keys())
        metrics.losses = {name: totals[name] / counts[name] for name in counts}
        self._log.info(
            f"iteration {iteration}: outcomes {dict(outcomes)}, "
            f"buffer {metrics.buffer_trajectories} trajectories"
        )
        return metrics

    def run(self, rng: RngStream) -> list[IterationMetrics]:
        return [
            self.finetune_iteration(iteration, rng.split(iteration))
            for iteration in range(self.schedule.iterations)
        ]


def intra_traj(
    buffer, ens, policy, critic, cfg: PlannerConfig, rng: RngStream, *, spec: EnvSpec
):
    return Reanalyzer(spec, buffer, ens, policy, critic, cfg).intra_traj(rng).trajectory


def inter_traj(
    buffer, ens, policy, critic, cfg: PlannerConfig, rng: RngStream, *, spec: EnvSpec
):
    return Reanalyzer(spec, buffer, ens, policy, critic, cfg).inter_traj(rng).trajectory
