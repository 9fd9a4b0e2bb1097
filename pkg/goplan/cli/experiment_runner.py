from __future__ import annotations

import csv
import json
import logging
import shutil
from contextlib import contextmanager
from pathlib import Path
from time import perf_counter

from goplan.buffer.trajectory_buffer import TrajectoryBuffer
from goplan.cli.command_registry import CommandRegistry
from goplan.cli.run_config import RunConfig
from goplan.critic.value_function import CriticConfig, ValueFunction
from goplan.dynamics.dynamics_ensemble import (
    DynamicsConfig,
    DynamicsEnsemble,
    calibrate_threshold,
)
from goplan.env.dataset_file import dataset_manifest, read_dataset, write_dataset
from goplan.env.dataset_generator import DatasetGenerator
from goplan.env.env_spec import EnvSpec
from goplan.errors import ConfigurationError
from goplan.eval.bandit_study import BanditStudy
from goplan.eval.evaluator import EvalMode, Evaluator
from goplan.eval.goal_split import GoalSplit
from goplan.eval.report_files import plot_regimes, write_eval_reports
from goplan.numerics.checkpoint import load_checkpoint, save_checkpoint
from goplan.numerics.rng_stream import RngStream
from goplan.planner.planner import PlannerConfig, write_plan_diagnostics
from goplan.policy.baseline_generator import BaselineGenerator, BaselineKind
from goplan.policy.gan_policy import GanPolicy, PolicyConfig
from goplan.policy.weighted_gan_trainer import WeightedGanTrainer
from goplan.reanalysis.reanalysis_buffer import replay_uncertainty_check
from goplan.reanalysis.reanalyzer import FinetuneSchedule, IterationMetrics, Reanalyzer

DYNAMICS_CHECKPOINT = "dynamics.ckpt"
CRITIC_CHECKPOINT = "critic.ckpt"
POLICY_CHECKPOINT = "policy.ckpt"
BC_CHECKPOINT = "bc.ckpt"
MODEL_CHECKPOINTS = (DYNAMICS_CHECKPOINT, CRITIC_CHECKPOINT, POLICY_CHECKPOINT)

LOSS_COLUMNS = ["step", "component", "loss"]
METRICS_COLUMNS = list(IterationMetrics(0, {}, 0, 0).to_row())

# Streams split off RngStream(seed); each stage owns one index.
STREAM_DYNAMICS_INIT = 1
STREAM_DYNAMICS_TRAIN = 2
STREAM_CRITIC_INIT = 3
STREAM_POLICY_INIT = 4
STREAM_PRETRAIN = 5
STREAM_BC = 6
STREAM_REANALYSIS = 7
STREAM_EVAL = 8
STREAM_PLAN_DIAGNOSTICS = 9


@contextmanager
def measure_elapsed(log: logging.Logger, what: str):
    start = perf_counter()

    def _get_elapsed():
        return perf_counter() - start

    yield _get_elapsed
    log.info(f"{what} finished in {_get_elapsed():.2f}s")


class ExperimentRunner:
    """Runs one CLI command against an output directory.

    Every artifact lands under ``out_dir``; commands read what earlier
    commands wrote there, so ``gen-data``, ``pretrain``, ``reanalyze`` and
    ``eval`` chain without extra arguments.
    """

    commands = CommandRegistry()

    def __init__(
        self,
        config: RunConfig,
        out_dir: Path | str,
        seed: int | None = None,
        plan: bool = False,
        log_handler: logging.Handler | None = None,
    ) -> None:
        self._log = self._init_logger(log_handler)
        self.config = config
        self.out_dir = Path(out_dir)
        self.seed = config.get_int("seed") if seed is None else int(seed)
        self.plan = plan
        self.spec: EnvSpec = config.env_spec()

    def _init_logger(self, log_handler):
        log = logging.getLogger("goplan.cli.ExperimentRunner")
        if log_handler is not None:
            logging.getLogger("goplan").addHandler(log_handler)
        log.debug("-" * 78)
        return log

    @property
    def dataset_path(self) -> Path:
        configured = self.config.get("dataset.path")
        return Path(configured) if configured else self.out_dir / "dataset.jsonl"

    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / "checkpoints"

    @property
    def finetuned_dir(self) -> Path:
        return self.out_dir / "finetuned"

    def run(self, command: str):
        self._log.info(f"{command}: seed {self.seed}, env {self.spec.name}, out {self.out_dir}")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with measure_elapsed(self._log, command):
            return self.commands.execute(self, command)

    def _require(self, *paths: Path):
        for path in paths:
            if not path.exists():
                raise FileNotFoundError(f"{path} does not exist, run the earlier command first")

    # models

    def build_dynamics(self) -> DynamicsEnsemble:
        return DynamicsEnsemble(
            self.spec.state_dim,
            self.spec.action_dim,
            DynamicsConfig.from_settings(self.config),
            RngStream(self.seed).split(STREAM_DYNAMICS_INIT),
        )

    def build_critic(self) -> ValueFunction:
        return ValueFunction(
            self.spec.state_dim,
            self.spec.goal_dim,
            CriticConfig.from_settings(self.config),
            RngStream(self.seed).split(STREAM_CRITIC_INIT),
        )

    def build_policy(self) -> GanPolicy:
        return GanPolicy(
            self.spec.state_dim,
            self.spec.action_dim,
            self.spec.goal_dim,
            self.spec.action_bound,
            PolicyConfig.from_settings(self.config),
            RngStream(self.seed).split(STREAM_POLICY_INIT),
        )

    def build_bc(self) -> BaselineGenerator:
        return BaselineGenerator(
            BaselineKind.GAUSSIAN,
            self.spec.state_dim,
            self.spec.action_dim,
            self.spec.goal_dim,
            self.spec.action_bound,
            PolicyConfig.from_settings(self.config),
            rng=RngStream(self.seed).split(STREAM_BC).split(0),
        )

    def load_models(self, directory: Path):
        self._require(*(directory / name for name in MODEL_CHECKPOINTS))
        ensemble = self.build_dynamics()
        ensemble.load_state_tensors(load_checkpoint(directory / DYNAMICS_CHECKPOINT))
        critic = self.build_critic()
        critic.load_state_tensors(load_checkpoint(directory / CRITIC_CHECKPOINT))
        policy = self.build_policy()
        policy.load_state_tensors(load_checkpoint(directory / POLICY_CHECKPOINT))
        return ensemble, critic, policy

    def load_buffer(self) -> TrajectoryBuffer:
        self._require(self.dataset_path)
        _, trajectories = read_dataset(self.dataset_path, self.spec)
        buffer = TrajectoryBuffer(self.spec)
        buffer.extend(trajectories)
        return buffer

    # commands

    @commands.register("gen-data")
    def cmd_gen_data(self) -> Path:
        region = None
        if self.config.get_boolean("dataset.ood_split"):
            region = GoalSplit(self.config.get_float("eval.split_boundary")).in_train
        generator = DatasetGenerator(
            self.spec,
            self.config.n_transitions,
            self.config.get_float("dataset.noise_std"),
            self.config.get_float("dataset.random_action_prob"),
            self.seed,
            start_region=region,
            goal_region=region,
        )
        trajectories = generator.generate()
        write_dataset(self.dataset_path, self.spec, trajectories)
        manifest = dataset_manifest(
            self.spec,
            trajectories,
            self.seed,
            noise_std=self.config.get_float("dataset.noise_std"),
            random_action_prob=self.config.get_float("dataset.random_action_prob"),
            ood_split=self.config.get_boolean("dataset.ood_split"),
            routes={route.value: count for route, count in sorted(generator.route_counts.items())},
        )
        manifest_path = self.dataset_path.with_suffix(".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return self.dataset_path

    @commands.register("pretrain")
    def cmd_pretrain(self) -> Path:
        buffer = self.load_buffer()
        root = RngStream(self.seed)
        losses: list[tuple[int, str, float]] = []

        ensemble = self.build_dynamics()
        states, actions, next_states = buffer.transitions()
        report = ensemble.train(
            states,
            actions,
            next_states,
            self.config.get_int("dynamics.epochs"),
            root.split(STREAM_DYNAMICS_TRAIN),
        )
        losses.extend((epoch, "dynamics", mse) for epoch, mse in enumerate(report.history))
        threshold = calibrate_threshold(
            ensemble,
            states[report.holdout],
            actions[report.holdout],
            ensemble.config.uncertainty_quantile,
        )
        self._log.info(f"uncertainty threshold u = {threshold:.6g}")

        critic = self.build_critic()
        policy = self.build_policy()
        batch_size = self.config.get_int("train.batch_size")
        future_ratio = self.config.get_float("train.future_ratio")
        WeightedGanTrainer(critic, policy).run(
            self.config.get_int("pretrain.steps"),
            lambda stream: buffer.sample_relabeled(batch_size, future_ratio, stream),
            root.split(STREAM_PRETRAIN),
            record=lambda step, component, loss: losses.append((step, component, loss)),
        )

        bc = self.build_bc()
        bc_rng = root.split(STREAM_BC).split(1)
        for step in range(self.config.get_int("pretrain.bc_steps")):
            batch = buffer.sample_relabeled(batch_size, future_ratio, bc_rng.split(step))
            losses.append((step, "bc", bc.likelihood_update(batch)))

        save_checkpoint(self.checkpoint_dir / DYNAMICS_CHECKPOINT, ensemble.state_tensors())
        save_checkpoint(self.checkpoint_dir / CRITIC_CHECKPOINT, critic.state_tensors())
        save_checkpoint(self.checkpoint_dir / POLICY_CHECKPOINT, policy.state_tensors())
        save_checkpoint(self.checkpoint_dir / BC_CHECKPOINT, bc.state_tensors())
        self._write_losses(self.out_dir / "pretrain_losses.csv", losses)
        return self.checkpoint_dir

    def _write_losses(self, path: Path, losses):
        with path.open("w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(LOSS_COLUMNS)
            for step, component, loss in losses:
                writer.writerow([step, component, f"{loss:.9g}"])

    @commands.register("reanalyze")
    def cmd_reanalyze(self) -> Path:
        self._require(*(self.checkpoint_dir / name for name in MODEL_CHECKPOINTS))
        schedule = FinetuneSchedule.from_settings(self.config)
        snapshot_path = self.out_dir / "reanalysis_buffer.jsonl"
        self.finetuned_dir.mkdir(parents=True, exist_ok=True)

        if schedule.iterations == 0:
            for name in (*MODEL_CHECKPOINTS, BC_CHECKPOINT):
                if (self.checkpoint_dir / name).exists():
                    shutil.copyfile(self.checkpoint_dir / name, self.finetuned_dir / name)
            self._write_metrics([])
            write_dataset(snapshot_path, self.spec, [])
            return self.finetuned_dir

        buffer = self.load_buffer()
        ensemble, critic, policy = self.load_models(self.checkpoint_dir)
        if ensemble.threshold is None:
            raise ConfigurationError(f"{DYNAMICS_CHECKPOINT} carries no uncertainty threshold")
        reanalyzer = Reanalyzer(
            self.spec,
            buffer,
            ensemble,
            policy,
            critic,
            PlannerConfig.from_settings(self.config),
            schedule,
        )
        metrics = reanalyzer.run(RngStream(self.seed).split(STREAM_REANALYSIS))

        violations = replay_uncertainty_check(
            reanalyzer.reanalysis_buffer, ensemble, ensemble.threshold
        )
        if violations:
            self._log.warning(f"{len(violations)} imagined trajectories exceed u on replay")
        self._log.info(f"reanalysis buffer: {reanalyzer.reanalysis_buffer.tag_counts()}")

        write_dataset(snapshot_path, self.spec, list(reanalyzer.reanalysis_buffer))
        self._write_metrics(metrics)
        for name in (DYNAMICS_CHECKPOINT, BC_CHECKPOINT):
            if (self.checkpoint_dir / name).exists():
                shutil.copyfile(self.checkpoint_dir / name, self.finetuned_dir / name)
        save_checkpoint(self.finetuned_dir / CRITIC_CHECKPOINT, critic.state_tensors())
        save_checkpoint(self.finetuned_dir / POLICY_CHECKPOINT, policy.state_tensors())
        return self.finetuned_dir

    def _write_metrics(self, metrics: list[IterationMetrics]):
        with (self.out_dir / "reanalysis_metrics.csv").open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=METRICS_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in metrics:
                writer.writerow(row.to_row())

    def eval_checkpoint_dir(self) -> Path:
        choice = self.config.get("eval.checkpoints")
        if choice == "pretrained":
            return self.checkpoint_dir
        if choice == "finetuned":
            return self.finetuned_dir
        return self.finetuned_dir if self.finetuned_dir.exists() else self.checkpoint_dir

    @commands.register("eval")
    def cmd_eval(self) -> Path:
        directory = self.eval_checkpoint_dir()
        ensemble, _, policy = self.load_models(directory)
        if self.config.get("eval.policy") == "bc":
            self._require(self.checkpoint_dir / BC_CHECKPOINT)
            policy = self.build_bc()
            policy.load_state_tensors(load_checkpoint(self.checkpoint_dir / BC_CHECKPOINT))

        mode = EvalMode.WITH_PLANNING if self.plan else EvalMode.POLICY_ONLY
        evaluator = Evaluator(
            self.spec,
            policy,
            ensemble if self.plan else None,
            PlannerConfig.from_settings(self.config),
            gamma=self.config.get_float("eval.gamma"),
        )
        episodes = self.config.get_int("eval.episodes")
        rng = RngStream(self.seed).split(STREAM_EVAL)
        if self.config.get_boolean("eval.ood_split"):
            split = GoalSplit(self.config.get_float("eval.split_boundary"))
            reports = list(evaluator.ood_evaluate(split, episodes, mode, rng).values())
        else:
            reports = [evaluator.evaluate(episodes, mode, rng)]

        if self.plan and reports[0].records:
            first = reports[0].records[0]
            result = evaluator.planner.plan_with_diagnostics(
                first.start,
                first.goal,
                RngStream(self.seed).split(STREAM_PLAN_DIAGNOSTICS),
            )
            write_plan_diagnostics(self.out_dir / "plan_diagnostics.csv", result)

        run_id = self.config.get("run_id")
        write_eval_reports(self.out_dir / "eval_report.csv", run_id, reports)
        plot_regimes(self.out_dir / "eval_regimes.svg", reports, f"{run_id} ({mode.value})")
        return self.out_dir / "eval_report.csv"

    @commands.register("appendix-a")
    def cmd_appendix_a(self) -> Path:
        study = BanditStudy(
            EnvSpec.line_bandit(),
            self.config.get_int("appendix_a.n_transitions"),
            self.config.get_float("appendix_a.noise_std"),
            self.config.get_int("appendix_a.steps"),
            self.config.get_int("appendix_a.samples"),
            self.config.get_float("appendix_a.delta"),
            PolicyConfig.from_settings(self.config),
            batch_size=self.config.get_int("train.batch_size"),
        )
        study.run(self.out_dir, self.seed)
        return self.out_dir / "appendix_a.csv"
