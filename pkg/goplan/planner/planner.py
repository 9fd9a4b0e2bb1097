from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from goplan.dynamics.a_dynamics_model import ADynamicsModel
from goplan.env.environments import make_env
from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError
from goplan.numerics.rng_stream import RngStream
from goplan.policy.action_sampler import ActionSampler


@dataclass(frozen=True)
class PlannerConfig:
    candidates: int = 64
    rollouts: int = 4
    depth: int = 10
    kappa: float = 5.0
    discount: float = 1.0

    def __post_init__(self):
        if min(self.candidates, self.rollouts, self.depth) < 1:
            raise ConfigurationError(
                "planner candidates, rollouts and depth must all be >= 1"
            )
        if self.kappa < 0:
            raise ConfigurationError(f"planner kappa must be >= 0, got {self.kappa}")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigurationError(f"planner discount must lie in (0, 1], got {self.discount}")

    @classmethod
    def from_settings(cls, settings) -> "PlannerConfig":
        return cls(
            candidates=settings.get_int(["planner.candidates"]),
            rollouts=settings.get_int(["planner.rollouts"]),
            depth=settings.get_int(["planner.depth"]),
            kappa=settings.get_float(["planner.kappa"]),
            discount=settings.get_float(["planner.discount"]),
        )


@dataclass
class PlanResult:
    action: np.ndarray
    candidates: np.ndarray
    returns: np.ndarray
    weights: np.ndarray
    nonfinite_rollouts: int = 0


def aggregate_candidates(
    candidates: np.ndarray, returns: np.ndarray, kappa: float
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax(kappa * R / sum R) average of the candidates; returns (action, weights).

    Equal returns, the all-zero case included, give uniform weights. Because
    returns are divided by their sum, the same kappa is softer when many
    candidates share the reward mass.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    returns = np.asarray(returns, dtype=np.float64)
    if np.all(returns == returns[0]):
        weights = np.full(len(returns), 1.0 / len(returns))
    else:
        total = returns.sum()
        normalized = returns / total if total != 0 else returns
        logits = kappa * normalized
        logits -= logits.max()
        weights = np.exp(logits)
        weights /= weights.sum()
    return weights @ candidates, weights


class Planner:
    """Candidate shooting through the dynamics ensemble.

    Each of the C policy candidates is advanced one step by a uniformly
    drawn member; the resulting state is copied H times and rolled K more
    steps with fresh policy actions and a fresh member per row and step.
    All C * H rollouts advance together, one policy call and one ensemble
    call per depth step. Rewards of every predicted state from the first
    one on are summed.
    """

    def __init__(
        self,
        spec: EnvSpec,
        ensemble: ADynamicsModel,
        policy: ActionSampler,
        config: PlannerConfig | None = None,
    ) -> None:
        self._log = logging.getLogger("goplan.planner.Planner")
        self.spec = spec
        self.ensemble = ensemble
        self.policy = policy
        self.config = config or PlannerConfig()
        self._env = make_env(spec)

    def plan(self, s0, g, rng: RngStream) -> np.ndarray:
        return self.plan_with_diagnostics(s0, g, rng).action

    def plan_with_diagnostics(self, s0, g, rng: RngStream) -> PlanResult:
        cfg = self.config
        s0 = np.asarray(s0, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if s0.shape != (self.spec.state_dim,) or g.shape != (self.spec.goal_dim,):
            raise ConfigurationError(
                f"planner got state {s0.shape} and goal {g.shape} for {self.spec.name}"
            )

        starts = np.repeat(s0[None], cfg.candidates, axis=0)
        goals = np.repeat(g[None], cfg.candidates, axis=0)
        candidates = np.atleast_2d(self.policy.sample_actions(starts, goals, rng.split(0)))
        first_members = rng.split(1).integers(self.ensemble.n_members, size=cfg.candidates)
        with np.errstate(all="ignore"):
            first_states = self.ensemble.predict_members(first_members, starts, candidates)

        per_rollout = self._rollout_returns(s0, first_states, g, rng.split(2))
        alive = np.isfinite(per_rollout)
        nonfinite = int(np.sum(~alive))
        returns = np.where(alive, per_rollout, 0.0).mean(axis=1)
        if nonfinite:
            self._log.warning(f"{nonfinite} rollouts hit non-finite states, returns zeroed")

        action, weights = aggregate_candidates(candidates, returns, cfg.kappa)
        return PlanResult(action, candidates, returns, weights, nonfinite)

    def _rollout_returns(
        self, s0: np.ndarray, first_states: np.ndarray, goal: np.ndarray, rng: RngStream
    ) -> np.ndarray:
        """(C, H) discounted returns; NaN marks a rollout that left the finite states."""
        cfg = self.config
        C, H = len(first_states), cfg.rollouts
        alive = np.repeat(np.all(np.isfinite(first_states), axis=1), H)
        states = np.repeat(first_states, H, axis=0)
        states[~alive] = s0
        goals = np.repeat(goal[None], C * H, axis=0)

        returns = self._env.reward(states, goals) * alive
        for k in range(1, cfg.depth + 1):
            step_rng = rng.split(k)
            with np.errstate(all="ignore"):
                actions = np.atleast_2d(
                    self.policy.sample_actions(states, goals, step_rng.split(0))
                )
                members = step_rng.split(1).integers(self.ensemble.n_members, size=C * H)
                proposed = self.ensemble.predict_members(members, states, actions)
            finite = np.all(np.isfinite(proposed), axis=1)
            alive &= finite
            states = np.where(finite[:, None], proposed, states)
            returns += cfg.discount**k * self._env.reward(states, goals) * alive
        returns[~alive] = np.nan
        return returns.reshape(C, H)


def plan(ens, policy, s0, g, cfg: PlannerConfig, rng: RngStream, *, spec: EnvSpec):
    return Planner(spec, ens, policy, cfg).plan(s0, g, rng)


def write_plan_diagnostics(path: Path | str, result: PlanResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        action_columns = [f"a{i}" for i in range(result.candidates.shape[1])]
        writer.writerow(["candidate", "return", "weight", *action_columns])
        for index, (value, weight, action) in enumerate(
            zip(result.returns, result.weights, result.candidates)
        ):
            writer.writerow(
                [index, float(value), float(weight), *(float(x) for x in action)]
            )
    return path
