"""Binary-classification metrics: confusion counts, ROC, AUC, cut-off choice.

Scores are real numbers (the pipeline produces probabilities in [0, 1]);
labels are 0 (negative) and 1 (positive).  A sample is predicted positive
exactly when its score is >= the threshold — the boundary is positive
everywhere in this package.  Specificity, sensitivity, and their mean are
reported in percent; table rendering rounds half-up (AUC to 3 decimals,
percentages to 2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

INTERPRET_BANDS = (
    (0.9, "Excellent discrimination"),
    (0.8, "Good discrimination"),
    (0.7, "Acceptable discrimination"),
    (0.6, "Poor discrimination"),
    (0.5, "No discrimination"),
)


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class RocCurve:
    """(threshold, fpr, tpr) triples, thresholds strictly decreasing.

    The first point is a sentinel threshold above every score (0, 0); the
    last threshold equals the minimum score, where every sample is predicted
    positive (1, 1).
    """

    points: list


def _split_scores(samples):
    scores = np.array([s.score for s in samples], dtype=np.float64)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return scores, labels


def confusion_at(samples, threshold: float) -> Confusion:
    if not samples:
        raise ValueError("confusion_at needs a non-empty sample list")
    scores, labels = _split_scores(samples)
    predicted = scores >= threshold
    return Confusion(
        tp=int(np.sum(predicted & (labels == 1))),
        tn=int(np.sum(~predicted & (labels == 0))),
        fp=int(np.sum(predicted & (labels == 0))),
        fn=int(np.sum(~predicted & (labels == 1))),
    )


def sp_se_acc(c: Confusion):
    """(specificity, sensitivity, their mean), all in percent."""
    if c.tn + c.fp == 0 or c.tp + c.fn == 0:
        raise ValueError("evaluation set lacks a class (zero denominator)")
    sp = 100.0 * c.tn / (c.tn + c.fp)
    se = 100.0 * c.tp / (c.tp + c.fn)
    return sp, se, (sp + se) / 2.0


def roc_curve(samples) -> RocCurve:
    scores, labels = _split_scores(samples)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative sample")
    uniq = np.unique(scores)  # ascending
    idx = np.searchsorted(uniq, scores)
    pos_at = np.zeros(len(uniq), dtype=np.int64)
    neg_at = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(pos_at, idx, labels == 1)
    np.add.at(neg_at, idx, labels == 0)
    # predicted positive iff score >= threshold, so counts are suffix sums
    tp = np.cumsum(pos_at[::-1])
    fp = np.cumsum(neg_at[::-1])
    points = [(float(uniq[-1] + 1.0), 0.0, 0.0)]
    for i, thr in enumerate(uniq[::-1]):
        points.append((float(thr), fp[i] / n_neg, tp[i] / n_pos))
    return RocCurve(points=points)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under tpr(fpr); equals the pairwise win rate with ties at 1/2."""
    area = 0.0
    pts = curve.points
    for (_, fpr0, tpr0), (_, fpr1, tpr1) in zip(pts, pts[1:]):
        area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0
    return area


def choose_cutoff(curve: RocCurve, samples):
    """Threshold maximizing Sp + Se; ties prefer higher Se, then lower threshold.

    The comparison runs in exact integers: maximizing Sp + Se is maximizing
    tn * P + tp * N over the confusion counts (P positives, N negatives).
    """
    scores, labels = _split_scores(samples)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("cut-off choice needs both classes")
    best = None  # (key, tp, threshold, confusion)
    for thr, _, _ in curve.points:
        predicted = scores >= thr
        tp = int(np.sum(predicted & (labels == 1)))
        fp = int(np.sum(predicted & (labels == 0)))
        tn = n_neg - fp
        key = tn * n_pos + tp * n_neg
        if (best is None or key > best[0]
                or (key == best[0] and tp > best[1])
                or (key == best[0] and tp == best[1] and thr < best[2])):
            best = (key, tp, thr, Confusion(tp=tp, tn=tn, fp=fp, fn=n_pos - tp))
    sp, se, _ = sp_se_acc(best[3])
    return best[2], sp, se


def interpret(auc_value: float) -> str:
    """Map an AUC to its discrimination band (half-open upward boundaries)."""
    if not 0.0 <= auc_value <= 1.0:
        raise ValueError(f"AUC must lie in [0, 1], got {auc_value}")
    for lo, label in INTERPRET_BANDS:
        if auc_value >= lo:
            return label
    return "Worse than chance"


# --------------------------------------------------------------------------
# Rendering


def round_half_up(x: float, places: int) -> float:
    return float(fmt_half_up(x, places))


def fmt_half_up(x: float, places: int) -> str:
    """Decimal string of x at fixed precision, exact half-up on the shortest repr."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def _check_row_consistency(name, sp, se, acc):
    mean = (Decimal(repr(float(sp))) + Decimal(repr(float(se)))) / 2
    if abs(Decimal(repr(float(acc))) - mean) > Decimal("0.01"):
        raise ValueError(
            f"row {name!r}: accuracy {acc} is not (Sp+Se)/2 = {mean} within 0.01"
        )


def report(rows):
    """rows: (name, auc, sp, se, acc) tuples -> (text table, record list).

    Accuracy is re-derived from Sp and Se and must agree within 0.01; a
    larger discrepancy raises instead of rendering a misleading table.
    """
    if not rows:
        raise ValueError("report needs at least one row")
    records = []
    for name, auc_value, sp, se, acc in rows:
        _check_row_consistency(name, sp, se, acc)
        records.append({
            "name": str(name),
            "auc": fmt_half_up(auc_value, 3),
            "sp": fmt_half_up(sp, 2),
            "se": fmt_half_up(se, 2),
            "acc": fmt_half_up(acc, 2),
            "interpretation": interpret(auc_value),
        })
    return render_records(records), records


def render_records(records) -> str:
    """Align already-rounded records into the four-column table text."""
    name_w = max([len(r["name"]) for r in records] + [len("Model")])
    lines = [f"{'Model':<{name_w}}  {'AUC':>6}  {'Sp (%)':>7}  {'Se (%)':>7}  {'Acc (%)':>7}"]
    for r in records:
        lines.append(
            f"{r['name']:<{name_w}}  {r['auc']:>6}  {r['sp']:>7}  {r['se']:>7}  {r['acc']:>7}"
        )
    return "\n".join(lines) + "\n"


def save_report(records, path, extra: dict | None = None) -> None:
    payload = {"rows": records}
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def load_report(path) -> list:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)["rows"]


def save_roc(curve: RocCurve, path) -> None:
    """One `threshold fpr tpr` line per point, full float precision."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# threshold fpr tpr\n")
        for thr, fpr, tpr in curve.points:
            f.write(f"{thr!r} {fpr!r} {tpr!r}\n")
