from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.env.a_goal_env import RegionPredicate
from goplan.env.environments import make_env
from goplan.env.env_spec import TWO_CORRIDOR_REACH, EnvSpec
from goplan.errors import ConfigurationError
from goplan.eval.goal_split import REGIMES, GoalSplit
from goplan.numerics.rng_stream import RngStream
from goplan.parallel import parallel_map
from goplan.planner.planner import Planner, PlannerConfig
from goplan.policy.action_sampler import ActionSampler

DEFAULT_GAMMA = 0.98


class EvalMode(str, Enum):
    POLICY_ONLY = "policy_only"
    WITH_PLANNING = "with_planning"


@dataclass
class EpisodeRecord:
    start: np.ndarray
    goal: np.ndarray
    success: bool
    discounted_return: float
    bucket: str
    actions: np.ndarray | None = None


@dataclass
class BucketStats:
    episodes: int
    success_rate: float
    mean_return: float


@dataclass
class EvalReport:
    mode: EvalMode
    episodes: int
    success_rate: float
    mean_return: float
    std_return: float
    buckets: dict[str, BucketStats] = field(default_factory=dict)
    records: list[EpisodeRecord] = field(default_factory=list, repr=False)
    regime: str = "all"

    @classmethod
    def from_records(
        cls, mode: EvalMode, records: list[EpisodeRecord], regime: str = "all"
    ) -> "EvalReport":
        returns = np.array([r.discounted_return for r in records])
        success = np.array([r.success for r in records], dtype=np.float64)
        buckets = {}
        for name in sorted({r.bucket for r in records}):
            members = [r for r in records if r.bucket == name]
            buckets[name] = BucketStats(
                episodes=len(members),
                success_rate=float(np.mean([r.success for r in members])),
                mean_return=float(np.mean([r.discounted_return for r in members])),
            )
        return cls(
            mode=mode,
            episodes=len(records),
            success_rate=float(success.mean()) if len(records) else 0.0,
            mean_return=float(returns.mean()) if len(records) else 0.0,
            std_return=float(returns.std()) if len(records) else 0.0,
            buckets=buckets,
            records=records,
            regime=regime,
        )

    def to_row(self, run_id: str) -> dict:
        return {
            "run_id": run_id,
            "regime": self.regime,
            "mode": self.mode.value,
            "episodes": self.episodes,
            "success_rate": f"{self.success_rate:.6f}",
            "mean_return": f"{self.mean_return:.6f}",
            "std_return": f"{self.std_return:.6f}",
        }


SUMMARY_MEAN = "all_regimes_mean"
SUMMARY_MIN = "all_regimes_min"
SUMMARY_MAX = "all_regimes_max"
SUMMARY_ROWS = (SUMMARY_MEAN, SUMMARY_MIN, SUMMARY_MAX)


@dataclass
class RegimeSummary:
    mean_success: float
    min_success: float
    max_success: float
    mean_return: float
    min_return: float
    max_return: float

    def to_rows(self, run_id: str, mode: str, episodes: int) -> list[dict]:
        """Aggregate rows laid out like ``EvalReport.to_row``; std is left blank."""
        stats = (
            (SUMMARY_MEAN, self.mean_success, self.mean_return),
            (SUMMARY_MIN, self.min_success, self.min_return),
            (SUMMARY_MAX, self.max_success, self.max_return),
        )
        return [
            {
                "run_id": run_id,
                "regime": name,
                "mode": mode,
                "episodes": episodes,
                "success_rate": f"{success:.6f}",
                "mean_return": f"{value:.6f}",
                "std_return": "",
            }
            for name, success, value in stats
        ]


class Evaluator:
    """Rolls episodes in the true environment.

    Episode ``e`` draws its start and goal from ``rng.split(e).split(0)`` and
    its actions from ``rng.split(e).split(1)``, so two modes given the same
    stream face the same starts and goals.
    """

    def __init__(
        self,
        spec: EnvSpec,
        policy: ActionSampler,
        ensemble: ADynamicsModel | None = None,
        planner_config: PlannerConfig | None = None,
        gamma: float = DEFAULT_GAMMA,
        record_actions: bool = False,
    ) -> None:
        self._log = logging.getLogger("goplan.eval.Evaluator")
        self.spec = spec
        self.policy = policy
        self.ensemble = ensemble
        self.gamma = gamma
        self.record_actions = record_actions
        self._env = make_env(spec)
        self._check_dims()
        self.planner = (
            Planner(spec, ensemble, policy, planner_config)
            if ensemble is not None
            else None
        )

    def _check_dims(self):
        expected = {
            "state_dim": self.spec.state_dim,
            "action_dim": self.spec.action_dim,
            "goal_dim": self.spec.goal_dim,
        }
        for component in (self.policy, self.ensemble):
            for name, value in expected.items():
                found = getattr(component, name, None)
                if isinstance(found, int) and found != value:
                    raise ConfigurationError(
                        f"{type(component).__name__}.{name}={found} does not match "
                        f"{self.spec.name} ({value})"
                    )

    def bucket(self, goal: np.ndarray) -> str:
        midpoint = 0.5 if self.spec.name == TWO_CORRIDOR_REACH else 0.0
        return "goal_left" if goal[0] < midpoint else "goal_right"

    def run_episode(
        self,
        mode: EvalMode,
        rng: RngStream,
        start_region: RegionPredicate | None = None,
        goal_region: RegionPredicate | None = None,
    ) -> EpisodeRecord:
        setup, actions_stream = rng.split(0), rng.split(1)
        state = self._env.sample_states(setup, 1, start_region)[0]
        goal = self._env.sample_goals(setup, 1, goal_region)[0]
        start = state.copy()

        success = False
        discounted = 0.0
        taken = []
        for t in range(self.spec.horizon):
            stream = actions_stream.split(t)
            if mode == EvalMode.WITH_PLANNING:
                action = self.planner.plan(state, goal, stream)
            else:
                action = np.atleast_2d(
                    self.policy.sample_actions(state[None], goal[None], stream)
                )[0]
            state = self._env.step(state, action)
            r = float(self._env.reward(state, goal))
            discounted += self.gamma**t * r
            success = success or r == 1.0
            if self.record_actions:
                taken.append(action)
        return EpisodeRecord(
            start=start,
            goal=goal,
            success=success,
            discounted_return=discounted,
            bucket=self.bucket(goal),
            actions=np.array(taken) if self.record_actions else None,
        )

    def evaluate(
        self,
        n_episodes: int,
        mode: EvalMode | str,
        rng: RngStream,
        start_region: RegionPredicate | None = None,
        goal_region: RegionPredicate | None = None,
        regime: str = "all",
    ) -> EvalReport:
        mode = EvalMode(mode)
        if mode == EvalMode.WITH_PLANNING and self.planner is None:
            raise ConfigurationError("with_planning evaluation needs a dynamics ensemble")
        records = parallel_map(
            lambda e: self.run_episode(mode, rng.split(e), start_region, goal_region),
            range(n_episodes),
        )
        report = EvalReport.from_records(mode, records, regime)
        self._log.info(
            f"{regime}/{mode.value}: success {report.success_rate:.3f} "
            f"return {report.mean_return:.3f} over {n_episodes} episodes"
        )
        return report

    def ood_evaluate(
        self, split: GoalSplit, n_episodes: int, mode: EvalMode | str, rng: RngStream
    ) -> dict[str, EvalReport]:
        reports = {}
        for index, regime in enumerate(REGIMES):
            start_region, goal_region = split.regions(regime)
            reports[regime] = self.evaluate(
                n_episodes, mode, rng.split(index), start_region, goal_region, regime
            )
        return reports


def summarize_regimes(reports: dict[str, EvalReport] | list[EvalReport]) -> RegimeSummary:
    reports = list(reports.values()) if isinstance(reports, dict) else list(reports)
    success = np.array([r.success_rate for r in reports])
    returns = np.array([r.mean_return for r in reports])
    return RegimeSummary(
        mean_success=float(success.mean()),
        min_success=float(success.min()),
        max_success=float(success.max()),
        mean_return=float(returns.mean()),
        min_return=float(returns.min()),
        max_return=float(returns.max()),
    )


def evaluate(env: EnvSpec, policy, ens, n_episodes: int, mode, rng: RngStream, **kwargs):
    return Evaluator(env, policy, ens, **kwargs).evaluate(n_episodes, mode, rng)


def ood_evaluate(
    env: EnvSpec, split: GoalSplit, policy, ens, n_episodes: int, mode, rng: RngStream, **kwargs
):
    return Evaluator(env, policy, ens, **kwargs).ood_evaluate(split, n_episodes, mode, rng)
