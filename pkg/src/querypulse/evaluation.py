"""Classifier evaluation: AUC, ROC/PR curves, precision-targeted operating
points, per-slice AUC and the CTR-bucket rating distribution table.

Scores are probabilities of the positive (DSAT) class throughout. All
functions are pure; file emission lives with the report writers at the end.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, TextIO

import numpy as np

from .errors import InvalidValueError, PrecisionUnattainableError, UndefinedAucError


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.uint8)
    if s.shape != y.shape or s.ndim != 1:
        raise InvalidValueError("scores and labels must be 1-d and the same length")
    if np.isnan(s).any():
        raise InvalidValueError("NaN score")
    return s, y


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based (Mann-Whitney) AUC with midrank tie handling.

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg) over
    all positive/negative pairs.
    """
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("need at least one positive and one negative")
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    midranks = ends - (counts - 1) / 2.0  # 1-based midrank per distinct value
    ranks = midranks[inverse]
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _threshold_counts(
    scores: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (threshold, tp, fp) at every distinct score, descending."""
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # last index of each tie block
    block_end = np.nonzero(np.diff(s) != 0)[0]
    block_end = np.append(block_end, s.size - 1)
    tp = np.cumsum(y)[block_end].astype(np.float64)
    fp = np.cumsum(1 - y)[block_end].astype(np.float64)
    return s[block_end], tp, fp


def roc_curve(
    scores: Sequence[float], labels: Sequence[int]
) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) per distinct threshold, descending score order,
    anchored at (inf, 0, 0). Trapezoidal area equals the rank AUC."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("need at least one positive and one negative")
    thresholds, tp, fp = _threshold_counts(s, y)
    points = [(float("inf"), 0.0, 0.0)]
    points.extend(
        (float(t), float(f / n_neg), float(p / n_pos))
        for t, p, f in zip(thresholds, tp, fp)
    )
    return points


def pr_curve(
    scores: Sequence[float], labels: Sequence[int]
) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) per distinct threshold, descending."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedAucError("need at least one positive and one negative")
    thresholds, tp, fp = _threshold_counts(s, y)
    return [
        (float(t), float(p / n_pos), float(p / (p + f)))
        for t, p, f in zip(thresholds, tp, fp)
    ]


def trapezoid_roc_area(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Trapezoidal area under the ROC polyline (cross-check for auc)."""
    points = roc_curve(scores, labels)
    fpr = np.asarray([p[1] for p in points])
    tpr = np.asarray([p[2] for p in points])
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(tpr, fpr))


def operating_point(
    scores: Sequence[float], labels: Sequence[int], target_precision: float
) -> dict[str, float]:
    """Highest-recall threshold whose precision meets the target.

    Classification is score >= threshold. Raises PrecisionUnattainableError
    carrying the best achievable precision when no threshold qualifies.
    """
    if not (0.0 < target_precision <= 1.0):
        raise InvalidValueError("target_precision must be in (0, 1]")
    points = pr_curve(scores, labels)
    eligible = [p for p in points if p[2] >= target_precision]
    if not eligible:
        raise PrecisionUnattainableError(max(p[2] for p in points))
    threshold, recall, precision = max(eligible, key=lambda p: (p[1], p[2], p[0]))
    return {"threshold": threshold, "precision": precision, "recall": recall}


def slice_auc(
    scores: Sequence[float],
    labels: Sequence[int],
    slice_values: Sequence[str],
) -> dict[str, dict]:
    """AUC within each slice value; one-class slices report auc=None."""
    s, y = _as_arrays(scores, labels)
    if len(slice_values) != s.size:
        raise InvalidValueError("slice_values length mismatch")
    values = np.asarray(slice_values)
    out: dict[str, dict] = {}
    for value in sorted(set(slice_values)):
        mask = values == value
        n_pos = int(y[mask].sum())
        n_neg = int(mask.sum()) - n_pos
        entry = {"n": int(mask.sum()), "n_pos": n_pos, "n_neg": n_neg}
        entry["auc"] = auc(s[mask], y[mask]) if n_pos and n_neg else None
        out[value] = entry
    return out


@dataclass(frozen=True)
class CtrBucketTable:
    """Rating distribution per percentile-based CTR bucket."""

    boundaries: list[float]  # 20th/40th/60th/80th percentiles of CTR
    counts: list[int]  # queries per bucket
    fractions: list[list[float]]  # 5 buckets x ratings 1..5, rows sum to 1

    def to_dict(self) -> dict:
        return {
            "boundaries": self.boundaries,
            "counts": self.counts,
            "fractions": self.fractions,
        }


def ctr_bucket_analysis(
    ctr_by_query: Mapping[str, float],
    ratings: Mapping[str, int],
) -> CtrBucketTable:
    """Bucket labeled queries by CTR percentile and tabulate rating fractions.

    Bucket boundaries sit at the 20th/40th/60th/80th percentiles of the CTR
    values of the labeled queries; a CTR equal to a boundary falls in the
    lower bucket.
    """
    queries = sorted(set(ctr_by_query) & set(ratings))
    if len(queries) < 5:
        raise InvalidValueError("CTR bucket analysis needs at least 5 labeled queries")
    ctr = np.asarray([ctr_by_query[q] for q in queries], dtype=np.float64)
    boundaries = np.percentile(ctr, [20.0, 40.0, 60.0, 80.0])
    bucket = np.searchsorted(boundaries, ctr, side="left")
    table = np.zeros((5, 5), dtype=np.int64)
    for b, query in zip(bucket, queries):
        rating = ratings[query]
        if rating not in (1, 2, 3, 4, 5):
            raise InvalidValueError(f"rating out of range for {query!r}")
        table[b, rating - 1] += 1
    counts = table.sum(axis=1)
    fractions = np.zeros((5, 5), dtype=np.float64)
    nonzero = counts > 0
    fractions[nonzero] = table[nonzero] / counts[nonzero, None]
    return CtrBucketTable(
        boundaries=[float(b) for b in boundaries],
        counts=[int(c) for c in counts],
        fractions=[[float(f) for f in row] for row in fractions],
    )


@dataclass
class EvalReport:
    """Everything the evaluate stage reports, JSON-serializable."""

    overall_auc: float
    n_test: int
    roc_points: list[tuple[float, float, float]]
    pr_points: list[tuple[float, float, float]]
    operating_point: dict | None
    target_precision: float
    slice_aucs: dict[str, dict[str, dict]]
    importances_top10: list[tuple[str, float]]
    ctr_buckets: CtrBucketTable
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "overall_auc": self.overall_auc,
            "n_test": self.n_test,
            "operating_point": self.operating_point,
            "target_precision": self.target_precision,
            "slice_aucs": self.slice_aucs,
            "importances_top10": [[n, v] for n, v in self.importances_top10],
            "ctr_buckets": self.ctr_buckets.to_dict(),
            "metadata": self.metadata,
        }

    # -- file emission -------------------------------------------------------

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    def save_roc_csv(self, path: str | Path) -> None:
        _write_points_csv(path, ["threshold", "fpr", "tpr"], self.roc_points)

    def save_pr_csv(self, path: str | Path) -> None:
        _write_points_csv(path, ["threshold", "recall", "precision"], self.pr_points)

    def save_ctr_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["bucket", "count"] + [f"frac_rating_{r}" for r in range(1, 6)]
            )
            for b in range(5):
                writer.writerow(
                    [b + 1, self.ctr_buckets.counts[b]]
                    + [repr(f) for f in self.ctr_buckets.fractions[b]]
                )

    def render_text(self) -> str:
        """Human-readable summary table."""
        lines = [
            f"overall AUC          {self.overall_auc:.4f}   (n={self.n_test})",
        ]
        if self.operating_point is not None:
            op = self.operating_point
            lines.append(
                f"operating point      threshold={op['threshold']:.4f} "
                f"precision={op['precision']:.4f} recall={op['recall']:.4f} "
                f"(target {self.target_precision:.2f})"
            )
        else:
            lines.append(
                f"operating point      unattainable at target "
                f"{self.target_precision:.2f}"
            )
        for key, slices in self.slice_aucs.items():
            lines.append(f"{key}:")
            for value, entry in slices.items():
                shown = "undefined" if entry["auc"] is None else f"{entry['auc']:.4f}"
                lines.append(f"  {value:<18} AUC {shown:<10} n={entry['n']}")
        lines.append("top importances:")
        for name, imp in self.importances_top10:
            lines.append(f"  {name:<40} {imp:.4f}")
        return "\n".join(lines) + "\n"


def _write_points_csv(
    path: str | Path | TextIO, header: list[str], points: list[tuple[float, ...]]
) -> None:
    own = isinstance(path, (str, Path))
    fh: TextIO = open(path, "w", encoding="utf-8", newline="") if own else path  # type: ignore[assignment]
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        for point in points:
            writer.writerow([repr(float(v)) for v in point])
    finally:
        if own:
            fh.close()
