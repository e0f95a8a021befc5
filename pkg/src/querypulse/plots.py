"""Figure rendering for the evaluate stage.

Kept out of the metric computations on purpose: evaluation produces numbers
and CSV point lists, this module turns them into PNGs next to those files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import CtrBucketTable, EvalReport

RATING_COLORS = ("#b2182b", "#ef8a62", "#fddbc7", "#a1c4d9", "#2166ac")


def plot_roc(points, overall_auc: float, path: Path) -> None:
    fpr = [p[1] for p in points]
    tpr = [p[2] for p in points]
    fig, ax = plt.subplots(figsize=(5, 4.2))
    ax.plot(fpr, tpr, color="#2166ac", lw=1.8, label=f"AUC = {overall_auc:.3f}")
    ax.plot([0, 1], [0, 1], color="gray", lw=0.8, ls="--")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title("ROC, DSAT as positive class")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pr(points, path: Path) -> None:
    recall = [p[1] for p in points]
    precision = [p[2] for p in points]
    fig, ax = plt.subplots(figsize=(5, 4.2))
    ax.plot(recall, precision, color="#b2182b", lw=1.8)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Precision-recall, DSAT as positive class")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ctr_buckets(table: CtrBucketTable, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    buckets = range(1, 6)
    bottom = [0.0] * 5
    for rating in range(5):
        heights = [table.fractions[b][rating] for b in range(5)]
        ax.bar(
            buckets, heights, bottom=bottom, width=0.7,
            color=RATING_COLORS[rating], label=f"rating {rating + 1}",
        )
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_xlabel("CTR percentile bucket (low to high)")
    ax.set_ylabel("Fraction of queries")
    ax.set_title("Rating distribution per CTR bucket")
    ax.set_xticks(list(buckets))
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report_figures(report: EvalReport, out_dir: Path) -> list[Path]:
    """Render roc.png, pr.png and ctr_buckets.png under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "roc.png", out_dir / "pr.png", out_dir / "ctr_buckets.png"]
    plot_roc(report.roc_points, report.overall_auc, paths[0])
    plot_pr(report.pr_points, paths[1])
    plot_ctr_buckets(report.ctr_buckets, paths[2])
    return paths
