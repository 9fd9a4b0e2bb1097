from __future__ import annotations

import csv
import shutil
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from pytest import fixture

from goplan.cli.experiment_runner import (
    BC_CHECKPOINT,
    CRITIC_CHECKPOINT,
    DYNAMICS_CHECKPOINT,
    METRICS_COLUMNS,
    MODEL_CHECKPOINTS,
    POLICY_CHECKPOINT,
    ExperimentRunner,
)
from goplan.cli.main import EXIT_BAD_INPUT, EXIT_OK, main
from goplan.cli.run_config import RunConfig
from goplan.eval.bandit_study import MODELS
from goplan.eval.evaluator import SUMMARY_ROWS
from goplan.eval.goal_split import REGIMES
from goplan.numerics.checkpoint import load_checkpoint

SMOKE_CONFIG = """
run_id = smoke
seed = 1
env.horizon = 10
dataset.preset = custom
dataset.n_transitions = 300
network.hidden = 16
train.batch_size = 32
dynamics.members = 2
dynamics.epochs = 1
dynamics.batch_size = 32
pretrain.steps = 3
pretrain.bc_steps = 3
planner.candidates = 4
planner.rollouts = 2
planner.depth = 2
reanalysis.iterations = 1
reanalysis.intra_per_iteration = 2
reanalysis.inter_per_iteration = 2
reanalysis.value_steps = 2
reanalysis.discriminator_steps = 2
reanalysis.generator_steps = 2
reanalysis.segment_length = 3
eval.episodes = 3
appendix_a.n_transitions = 200
appendix_a.steps = 5
appendix_a.samples = 50
"""


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@fixture
def cli_folder(output_folder, request):
    folder = output_folder / "cli" / request.node.name.replace("[", "_").replace("]", "")
    shutil.rmtree(folder, ignore_errors=True)
    folder.mkdir(parents=True)
    return folder


def write_config(folder, extra: str = ""):
    path = folder / "run.cfg"
    path.write_text(SMOKE_CONFIG + extra)
    return path


def run_cli(folder, *commands, extra: str = "", flags=()):
    config = write_config(folder, extra)
    out = folder / "out"
    codes = [
        main([command, "--config", str(config), "--out", str(out), *flags])
        for command in commands
    ]
    return codes, out


def test_gen_data_writes_dataset_manifest_and_log(cli_folder):
    codes, out = run_cli(cli_folder, "gen-data")
    assert codes == [EXIT_OK]
    assert (out / "dataset.jsonl").is_file()
    assert (out / "dataset.manifest.json").is_file()
    assert (out / "goplan.log").stat().st_size > 0


def test_full_pipeline(cli_folder):
    codes, out = run_cli(cli_folder, "gen-data", "pretrain", "reanalyze", "eval")
    assert codes == [EXIT_OK] * 4
    for name in (*MODEL_CHECKPOINTS, BC_CHECKPOINT):
        assert (out / "checkpoints" / name).is_file()
        assert (out / "finetuned" / name).is_file()
    losses = read_rows(out / "pretrain_losses.csv")
    assert {row["component"] for row in losses} == {
        "dynamics", "value", "discriminator", "generator", "bc"
    }
    metrics = read_rows(out / "reanalysis_metrics.csv")
    assert len(metrics) == 1
    assert list(metrics[0]) == METRICS_COLUMNS
    report = read_rows(out / "eval_report.csv")
    assert [row["run_id"] for row in report] == ["smoke"]
    assert report[0]["mode"] == "policy_only"
    assert ET.parse(out / "eval_regimes.svg").getroot().tag.endswith("svg")


def test_reruns_are_byte_identical(cli_folder):
    outputs = []
    for name in ("first", "second"):
        folder = cli_folder / name
        folder.mkdir()
        codes, out = run_cli(folder, "gen-data", "pretrain", "reanalyze", "eval")
        assert codes == [EXIT_OK] * 4
        outputs.append(out)
    for name in (
        "dataset.jsonl",
        "pretrain_losses.csv",
        "reanalysis_metrics.csv",
        "reanalysis_buffer.jsonl",
        "eval_report.csv",
        "eval_regimes.svg",
        "finetuned/policy.ckpt",
    ):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name


def test_zero_reanalysis_iterations_copy_checkpoints(cli_folder):
    codes, out = run_cli(
        cli_folder, "gen-data", "pretrain", "reanalyze", extra="reanalysis.iterations = 0\n"
    )
    assert codes == [EXIT_OK] * 3
    for name in (*MODEL_CHECKPOINTS, BC_CHECKPOINT):
        assert (out / "checkpoints" / name).read_bytes() == (out / "finetuned" / name).read_bytes()
    assert read_rows(out / "reanalysis_metrics.csv") == []
    assert (out / "reanalysis_metrics.csv").read_text().strip() == ",".join(METRICS_COLUMNS)


def test_zero_training_keeps_initial_models(cli_folder):
    extra = "dynamics.epochs = 0\npretrain.steps = 0\npretrain.bc_steps = 0\n"
    codes, out = run_cli(cli_folder, "gen-data", "pretrain", extra=extra)
    assert codes == [EXIT_OK] * 2

    config = RunConfig.from_file(cli_folder / "run.cfg")
    runner = ExperimentRunner(config, out)
    expected = {
        CRITIC_CHECKPOINT: runner.build_critic().state_tensors(),
        POLICY_CHECKPOINT: runner.build_policy().state_tensors(),
        BC_CHECKPOINT: runner.build_bc().state_tensors(),
        DYNAMICS_CHECKPOINT: runner.build_dynamics().state_tensors(),
    }
    for name, tensors in expected.items():
        saved = load_checkpoint(out / "checkpoints" / name)
        for key, value in tensors.items():
            if key.startswith("dynamics/") and not key.startswith("dynamics/member"):
                continue
            np.testing.assert_array_equal(saved[key], value, err_msg=f"{name}:{key}")
    assert "dynamics/uncertainty_threshold" in load_checkpoint(
        out / "checkpoints" / DYNAMICS_CHECKPOINT
    )


def test_planned_ood_evaluation_reports_every_regime(cli_folder):
    extra = "dataset.ood_split = true\neval.ood_split = true\neval.episodes = 2\n"
    codes, out = run_cli(cli_folder, "gen-data", "pretrain", extra=extra)
    assert codes == [EXIT_OK] * 2
    config = write_config(cli_folder, extra)
    assert main(["eval", "--config", str(config), "--out", str(out), "--plan"]) == EXIT_OK
    report = read_rows(out / "eval_report.csv")
    assert [row["regime"] for row in report] == [*REGIMES, *SUMMARY_ROWS]
    assert {row["mode"] for row in report} == {"with_planning"}
    regime_success = [float(row["success_rate"]) for row in report[: len(REGIMES)]]
    assert float(report[-2]["success_rate"]) == pytest.approx(min(regime_success), abs=1e-6)
    diagnostics = read_rows(out / "plan_diagnostics.csv")
    assert len(diagnostics) == 4


def test_behavior_cloning_evaluation(cli_folder):
    codes, out = run_cli(
        cli_folder, "gen-data", "pretrain", "eval", extra="eval.policy = bc\n"
    )
    assert codes == [EXIT_OK] * 3
    assert len(read_rows(out / "eval_report.csv")) == 1


def test_appendix_a_reports_every_model(cli_folder):
    codes, out = run_cli(cli_folder, "appendix-a")
    assert codes == [EXIT_OK]
    rows = read_rows(out / "appendix_a.csv")
    assert [row["model"] for row in rows] == list(MODELS)
    assert all(row["status"] == "ok" for row in rows)
    for model in MODELS:
        assert ET.parse(out / f"appendix_a_{model}.svg").getroot().tag.endswith("svg")


def test_missing_inputs_exit_with_bad_input(cli_folder):
    out = cli_folder / "out"
    assert main(["gen-data", "--config", str(cli_folder / "none.cfg"), "--out", str(out)]) == (
        EXIT_BAD_INPUT
    )
    codes, _ = run_cli(cli_folder, "pretrain")
    assert codes == [EXIT_BAD_INPUT]
    codes, _ = run_cli(cli_folder, "eval")
    assert codes == [EXIT_BAD_INPUT]


def test_bad_config_exits_with_bad_input(cli_folder):
    codes, _ = run_cli(cli_folder, "gen-data", extra="planner.horizon = 3\n")
    assert codes == [EXIT_BAD_INPUT]


def test_unknown_command_is_rejected_by_the_parser(cli_folder):
    with pytest.raises(SystemExit) as exit_info:
        main(["train-everything", "--out", str(cli_folder)])
    assert exit_info.value.code == 2


def test_seed_flag_overrides_config(cli_folder):
    config = write_config(cli_folder)
    for seed in ("5", "6"):
        out = cli_folder / f"seed{seed}"
        assert main(["gen-data", "--config", str(config), "--out", str(out), "--seed", seed]) == 0
    first = (cli_folder / "seed5" / "dataset.jsonl").read_bytes()
    assert first != (cli_folder / "seed6" / "dataset.jsonl").read_bytes()


@pytest.mark.slow
def test_weighted_cgan_concentrates_on_the_rewarding_mode(cli_folder):
    config = cli_folder / "study.cfg"
    config.write_text("seed = 3\n")
    out = cli_folder / "out"
    assert main(["appendix-a", "--config", str(config), "--out", str(out)]) == EXIT_OK
    rows = {row["model"]: row for row in read_rows(out / "appendix_a.csv")}
    mass = {model: float(row["high_reward_mass"]) for model, row in rows.items()}
    ood = {model: float(row["ood_fraction"]) for model, row in rows.items()}
    assert mass["weighted_cgan"] > mass["cgan"]
    assert ood["gaussian"] > ood["cgan"]


def success_rates(folder, seed: int, extra: str = ""):
    """Runs the pipeline once and evaluates bc, pretrained and finetuned policies."""
    config = folder / "compare.cfg"
    config.write_text(f"seed = {seed}\ndataset.preset = small\n{extra}")
    out = folder / f"seed{seed}"
    for command in ("gen-data", "pretrain", "reanalyze"):
        assert main([command, "--config", str(config), "--out", str(out)]) == EXIT_OK

    rates = {}
    for name, choice in (
        ("bc", "eval.policy = bc\n"),
        ("pretrained", "eval.checkpoints = pretrained\n"),
        ("finetuned", "eval.checkpoints = finetuned\n"),
    ):
        config.write_text(f"seed = {seed}\ndataset.preset = small\n{extra}{choice}")
        assert main(["eval", "--config", str(config), "--out", str(out)]) == EXIT_OK
        rates[name] = [float(row["success_rate"]) for row in read_rows(out / "eval_report.csv")]
    return rates


@pytest.mark.slow
def test_finetuning_improves_on_pretraining_and_cloning(cli_folder):
    for seed in range(5):
        rates = success_rates(cli_folder, seed)
        assert rates["finetuned"][0] >= rates["pretrained"][0] >= rates["bc"][0], seed


@pytest.mark.slow
def test_finetuning_improves_the_worst_held_out_regime(cli_folder):
    rates = success_rates(
        cli_folder, 0, extra="dataset.ood_split = true\neval.ood_split = true\n"
    )
    assert min(rates["finetuned"]) >= min(rates["pretrained"])


def test_pretraining_lowers_the_dynamics_loss(cli_folder):
    codes, out = run_cli(cli_folder, "gen-data", "pretrain", extra="dynamics.epochs = 10\n")
    assert codes == [EXIT_OK] * 2
    losses = [
        float(row["loss"])
        for row in read_rows(out / "pretrain_losses.csv")
        if row["component"] == "dynamics"
    ]
    assert losses[-1] < losses[0]
