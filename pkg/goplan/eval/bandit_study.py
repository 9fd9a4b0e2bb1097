from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from goplan.buffer.relabeled_batch import RelabeledBatch  # noqa: E402
from goplan.env.dataset_generator import generate_dataset  # noqa: E402
from goplan.env.env_spec import EnvSpec  # noqa: E402
from goplan.env.environments import make_env  # noqa: E402
from goplan.errors import ConfigurationError  # noqa: E402
from goplan.eval.report_files import save_svg  # noqa: E402
from goplan.numerics.rng_stream import RngStream  # noqa: E402
from goplan.policy.baseline_generator import (  # noqa: E402
    BaselineKind,
    draw_minibatch,
    fit_baseline,
)
from goplan.policy.gan_policy import GanPolicy, PolicyConfig  # noqa: E402
from goplan.policy.mode_metrics import mode_separation_metrics  # noqa: E402

GAUSSIAN = "gaussian"
WEIGHTED_GAUSSIAN = "weighted_gaussian"
CGAN = "cgan"
WEIGHTED_CGAN = "weighted_cgan"
MODELS = (GAUSSIAN, WEIGHTED_GAUSSIAN, CGAN, WEIGHTED_CGAN)

STUDY_COLUMNS = ["model", "ood_fraction", "high_reward_mass", "status"]


@dataclass
class StudyRow:
    model: str
    ood_fraction: float
    high_reward_mass: float
    status: str = "ok"

    def to_row(self) -> dict:
        return {
            "model": self.model,
            "ood_fraction": f"{self.ood_fraction:.6f}",
            "high_reward_mass": f"{self.high_reward_mass:.6f}",
            "status": self.status,
        }


def bandit_batch(spec: EnvSpec, trajectories) -> RelabeledBatch:
    """Single-step bandit transitions, rewarded by the mode the action hits."""
    env = make_env(spec)
    states = np.stack([t.states[0] for t in trajectories])
    actions = np.stack([t.actions[0] for t in trajectories])
    n = len(states)
    return RelabeledBatch(
        states=states,
        actions=actions,
        goals=env.phi(states),
        rewards=env.bandit_reward(states, actions),
        next_states=states.copy(),
        dones=np.zeros(n, dtype=bool),
        relabeled=np.zeros(n, dtype=bool),
    )


def fit_weighted_cgan(
    spec: EnvSpec,
    dataset: RelabeledBatch,
    weights: np.ndarray,
    steps: int,
    batch_size: int,
    config: PolicyConfig,
    rng: RngStream,
) -> GanPolicy:
    policy = GanPolicy(
        spec.state_dim,
        spec.action_dim,
        spec.goal_dim,
        spec.action_bound,
        config,
        rng=rng.split(0),
    )
    train_rng = rng.split(1)
    for _ in range(steps):
        minibatch, minibatch_weights = draw_minibatch(dataset, weights, batch_size, train_rng)
        policy.discriminator_update(minibatch, minibatch_weights, train_rng)
        policy.generator_update(minibatch.states, minibatch.goals, train_rng)
    return policy


class BanditStudy:
    """Fits four action generators to the line-bandit data and measures how
    much of their mass falls between modes or on the best mode.

    Rewards double as the per-sample weights of the weighted variants.
    """

    def __init__(
        self,
        spec: EnvSpec,
        n_transitions: int,
        noise_std: float,
        steps: int,
        n_samples: int,
        delta: float,
        config: PolicyConfig | None = None,
        batch_size: int = 256,
    ) -> None:
        self._log = logging.getLogger("goplan.eval.BanditStudy")
        if not spec.bandit_modes:
            raise ConfigurationError(f"{spec.name} has no bandit modes")
        if n_samples < 1:
            raise ConfigurationError("the study needs at least one sample")
        self.spec = spec
        self.n_transitions = n_transitions
        self.noise_std = noise_std
        self.steps = steps
        self.n_samples = n_samples
        self.delta = delta
        self.config = config or PolicyConfig()
        self.batch_size = batch_size
        self._env = make_env(spec)

    def fit(self, model: str, dataset: RelabeledBatch, rng: RngStream):
        weights = dataset.rewards
        if model == GAUSSIAN:
            kind, weights = BaselineKind.GAUSSIAN, None
        elif model == WEIGHTED_GAUSSIAN:
            kind = BaselineKind.WEIGHTED_GAUSSIAN
        elif model == CGAN:
            kind, weights = BaselineKind.CGAN_UNWEIGHTED, None
        elif model == WEIGHTED_CGAN:
            return fit_weighted_cgan(
                self.spec, dataset, weights, self.steps, self.batch_size, self.config, rng
            )
        else:
            raise ConfigurationError(f"unknown study model {model!r}, expected one of {MODELS}")
        return fit_baseline(
            kind,
            dataset,
            weights,
            self.spec.action_bound,
            self.steps,
            batch_size=self.batch_size,
            config=self.config,
            rng=rng,
        )

    def run(self, out_dir: Path | str, seed: int) -> list[StudyRow]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        root = RngStream(seed)
        trajectories = generate_dataset(self.spec, self.n_transitions, self.noise_std, 0.0, seed)
        dataset = bandit_batch(self.spec, trajectories)
        test_states = self._env.sample_states(root.split(0), self.n_samples, None)
        test_goals = self._env.phi(test_states)

        rows = []
        for index, model in enumerate(MODELS):
            stream = root.split(1 + index)
            try:
                generator = self.fit(model, dataset, stream.split(0))
                samples = generator.sample_actions(test_states, test_goals, stream.split(1))
                ood, high = mode_separation_metrics(samples, self.spec.bandit_modes, self.delta)
                self.plot(out_dir / f"appendix_a_{model}.svg", model, test_states, samples)
                rows.append(StudyRow(model, ood, high))
                self._log.info(f"{model}: ood fraction {ood:.3f}, high-reward mass {high:.3f}")
            except Exception:
                self._log.exception(f"{model}: fitting failed")
                rows.append(StudyRow(model, math.nan, math.nan, status="failed"))
        write_study_rows(out_dir / "appendix_a.csv", rows)
        return rows

    def plot(self, path: Path, model: str, states, samples):
        figure, axis = plt.subplots(figsize=(6, 4))
        axis.scatter(np.ravel(states), np.ravel(samples), s=4, alpha=0.5, color="tab:blue")
        best = self.spec.highest_reward_mode
        for mode in self.spec.bandit_modes:
            axis.axhline(mode.center, color="tab:red" if mode is best else "tab:gray", lw=1)
        axis.set_xlabel("state")
        axis.set_ylabel("action")
        axis.set_ylim(-self.spec.action_bound, self.spec.action_bound)
        axis.set_title(model)
        save_svg(figure, path)


def write_study_rows(path: Path | str, rows: list[StudyRow]):
    with Path(path).open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=STUDY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_row())
    return path
