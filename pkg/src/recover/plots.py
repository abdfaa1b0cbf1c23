"""Report figures written next to report.json."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvaluationReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 150,
}
COUNT_COLORS = {"C": "#4c72b0", "S": "#dd8452", "D": "#c44e52", "I": "#8172b2"}


def rates_figure(report: EvaluationReport):
    names = list(report.per_system)
    metrics = [("WER", "wer"), ("E-WER", "e_wer")]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(names), 3.0))
        width = 0.8 / len(metrics)
        for k, (label, attr) in enumerate(metrics):
            values = [100 * (getattr(report.per_system[n], attr) or 0.0) for n in names]
            xs = [i + (k - (len(metrics) - 1) / 2) * width for i in range(len(names))]
            bars = ax.bar(xs, values, width, label=label)
            ax.bar_label(bars, fmt="%.1f", fontsize=7, padding=1)
        ax.set_xticks(range(len(names)), names)
        ax.set_ylabel("error rate (%)")
        ax.legend()
        fig.tight_layout()
    return fig


def counts_figure(report: EvaluationReport):
    names = list(report.per_system)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 0.6 + 0.5 * len(names)))
        left = [0] * len(names)
        for key, attr in (("C", "correct"), ("S", "substitutions"), ("D", "deletions"), ("I", "insertions")):
            values = [getattr(report.per_system[n].entity_counts, attr) for n in names]
            ax.barh(names, values, left=left, color=COUNT_COLORS[key], label=key)
            left = [a + b for a, b in zip(left, values)]
        ax.invert_yaxis()
        ax.set_xlabel("entity tokens")
        ax.legend(ncol=4, loc="lower center", bbox_to_anchor=(0.5, 1.0))
        fig.tight_layout()
    return fig


def render_report_figures(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, make in (("report_rates.png", rates_figure), ("report_entity_counts.png", counts_figure)):
        fig = make(report)
        path = out_dir / name
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
