from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from goplan.eval.evaluator import EvalReport, summarize_regimes  # noqa: E402

EVAL_COLUMNS = [
    "run_id",
    "regime",
    "mode",
    "episodes",
    "success_rate",
    "mean_return",
    "std_return",
]

_log = logging.getLogger("goplan.eval.report_files")


def write_eval_reports(path: Path | str, run_id: str, reports: list[EvalReport]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=EVAL_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerow(report.to_row(run_id))
        if len(reports) > 1:
            episodes = sum(report.episodes for report in reports)
            summary = summarize_regimes(reports)
            writer.writerows(summary.to_rows(run_id, reports[0].mode.value, episodes))
    _log.info(f"wrote {len(reports)} report rows to {path}")
    return path


def save_svg(figure, path: Path | str):
    """Standalone SVG without the creation date, so reruns write identical bytes."""
    with plt.rc_context({"svg.hashsalt": "goplan", "svg.fonttype": "path"}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)


def plot_regimes(path: Path | str, reports: list[EvalReport], title: str = ""):
    regimes = [report.regime for report in reports]
    figure, axis = plt.subplots(figsize=(6, 4))
    axis.bar(regimes, [report.success_rate for report in reports], color="tab:blue")
    if len(reports) > 1:
        summary = summarize_regimes(reports)
        axis.axhspan(summary.min_success, summary.max_success, color="tab:gray", alpha=0.2)
        axis.axhline(summary.mean_success, color="tab:red", lw=1, ls="--", label="mean")
        axis.legend(loc="upper right")
    axis.set_ylim(0.0, 1.0)
    axis.set_ylabel("success rate")
    axis.set_title(title or f"{reports[0].mode.value} success by regime")
    save_svg(figure, path)
    return path
