"""Precision/recall/F1, threshold sweeps, and size-gap error breakdowns.

A score counts as a positive prediction when it is >= the threshold.
Degenerate ratios (empty denominator) are reported as 0.0 rather than
raising, so sweeps over extreme thresholds stay total.
"""

import csv
import os
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import LengthMismatch

SWEEP_COLUMNS = ("threshold", "precision", "recall", "f1", "pred_pos")

# Half-open [lo, hi) buckets over |nodes(a) - nodes(b)|; last is unbounded.
GAP_BINS: Tuple[Tuple[int, Optional[int]], ...] = (
    (0, 2), (2, 4), (4, 8), (8, 16), (16, None))


def confusion_counts(scores: Sequence[float], labels: Sequence[int],
                     threshold: float) -> Tuple[int, int, int, int]:
    if len(scores) != len(labels):
        raise LengthMismatch("%d scores vs %d labels"
                             % (len(scores), len(labels)))
    tp = fp = fn = tn = 0
    for s, y in zip(scores, labels):
        pred = s >= threshold
        if pred and y:
            tp += 1
        elif pred:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> Dict[str, float]:
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    accuracy = (tp + tn) / n if n else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "accuracy": accuracy, "tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "n": n, "pred_pos": tp + fp}


def compute_metrics(scores: Sequence[float], labels: Sequence[int],
                    threshold: float) -> Dict[str, float]:
    tp, fp, fn, tn = confusion_counts(scores, labels, threshold)
    out = metrics_from_counts(tp, fp, fn, tn)
    out["threshold"] = threshold
    return out


def sweep_thresholds() -> List[float]:
    return [round(0.05 * i, 2) for i in range(21)]


def threshold_sweep(scores: Sequence[float],
                    labels: Sequence[int]) -> List[Dict[str, float]]:
    return [compute_metrics(scores, labels, t) for t in sweep_thresholds()]


def write_sweep_csv(rows: Sequence[Dict[str, float]], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(["%.2f" % row["threshold"],
                             "%.6f" % row["precision"],
                             "%.6f" % row["recall"],
                             "%.6f" % row["f1"],
                             "%d" % row["pred_pos"]])


def read_sweep_csv(path: str) -> List[Dict[str, float]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append({"threshold": float(rec["threshold"]),
                         "precision": float(rec["precision"]),
                         "recall": float(rec["recall"]),
                         "f1": float(rec["f1"]),
                         "pred_pos": int(rec["pred_pos"])})
    return rows


def size_gap_analysis(scores: Sequence[float], labels: Sequence[int],
                      gaps: Sequence[int],
                      threshold: float) -> List[Dict[str, float]]:
    """Per-bucket metrics over pairs grouped by node-count gap. Empty
    buckets are kept with n=0 so the report shape is stable."""
    if not (len(scores) == len(labels) == len(gaps)):
        raise LengthMismatch("scores/labels/gaps lengths differ: %d/%d/%d"
                             % (len(scores), len(labels), len(gaps)))
    out = []
    for lo, hi in GAP_BINS:
        idx = [i for i, g in enumerate(gaps)
               if g >= lo and (hi is None or g < hi)]
        bucket = compute_metrics([scores[i] for i in idx],
                                 [labels[i] for i in idx], threshold)
        bucket.pop("threshold")
        bucket["gap_lo"] = lo
        bucket["gap_hi"] = hi
        out.append(bucket)
    return out
