"""Binary classification metrics (positive class = 1).

All ratio metrics return 0.0 on a zero denominator rather than raising;
AUC uses the rank-based Mann-Whitney formulation with average ranks for
ties, so it is deterministic and needs no threshold sweep.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tp, tn, fp, fn) with class 1 positive."""
    yt = np.asarray(y_true).astype(int)
    yp = np.asarray(y_pred).astype(int)
    if yt.shape != yp.shape:
        raise MetricError(f"shape mismatch {yt.shape} vs {yp.shape}")
    tp = int(np.sum((yt == 1) & (yp == 1)))
    tn = int(np.sum((yt == 0) & (yp == 0)))
    fp = int(np.sum((yt == 0) & (yp == 1)))
    fn = int(np.sum((yt == 1) & (yp == 0)))
    return tp, tn, fp, fn


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


def accuracy_score(y_true, y_pred) -> float:
    tp, tn, fp, fn = confusion(y_true, y_pred)
    return _ratio(tp + tn, tp + tn + fp + fn)


def specificity_score(y_true, y_pred) -> float:
    _, tn, fp, _ = confusion(y_true, y_pred)
    return _ratio(tn, tn + fp)


def sensitivity_score(y_true, y_pred) -> float:
    tp, _, _, fn = confusion(y_true, y_pred)
    return _ratio(tp, tp + fn)


def f1_score(y_true, y_pred) -> float:
    tp, _, fp, fn = confusion(y_true, y_pred)
    return _ratio(2 * tp, 2 * tp + fp + fn)


def auc_score(y_true, scores) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal)."""
    yt = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    if yt.shape != s.shape:
        raise MetricError(f"shape mismatch {yt.shape} vs {s.shape}")
    n_pos = int(np.sum(yt == 1))
    n_neg = int(np.sum(yt == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes present")
    ranks = rankdata(s)  # average ranks on ties
    u = float(np.sum(ranks[yt == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def classification_report(y_true, y_pred, scores=None) -> dict:
    """The full metric set; AUC included when scores are given."""
    report = {
        "accuracy": accuracy_score(y_true, y_pred),
        "specificity": specificity_score(y_true, y_pred),
        "sensitivity": sensitivity_score(y_true, y_pred),
        "f1": f1_score(y_true, y_pred),
    }
    if scores is not None:
        report["auc"] = auc_score(y_true, scores)
    return report
